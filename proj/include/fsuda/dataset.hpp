#ifndef FSUDA_DATASET_HPP
#define FSUDA_DATASET_HPP

#include "fsuda/tensor.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fsuda {

enum class Domain { kSource = 0, kTarget = 1 };
enum class Split { kTrain, kVal, kTest };

const char* domain_name(Domain d);
const char* split_name(Split s);
Split parse_split(const std::string& name);

struct ManifestFile {
    Index cls;
    Domain domain;
    std::string file;
    std::uint32_t crc32;
};

/// Description of a two-domain dataset directory.
struct DatasetManifest {
    std::string generator_version;
    std::uint64_t seed = 0;
    Index classes = 0;
    Index samples_per_class = 0;
    Index height = 0, width = 0, channels = 0;
    double noise = 0;
    std::vector<Index> train, val, test;
    std::vector<ManifestFile> files;

    const std::vector<Index>& split(Split s) const;
    /// Throws unless splits are pairwise disjoint and cover every class, and
    /// each class has exactly one file per domain.
    void validate() const;

    std::string to_json() const;
    static DatasetManifest from_json(const std::string& text);
};

struct ImageRef {
    Index cls;
    Index sample;
    Domain domain;

    bool operator==(const ImageRef&) const = default;
};

/// Handle to an unlabeled target image. The class is not observable through
/// the handle; only Dataset resolves it.
class TargetRef {
public:
    TargetRef() = default;
    bool operator==(const TargetRef&) const = default;

private:
    friend class Dataset;
    TargetRef(Index cls, Index sample) : cls_(cls), sample_(sample) {}
    Index cls_ = 0;
    Index sample_ = 0;
};

/// In-memory dataset: per class and domain an image stack [S,H,W,C].
class Dataset {
public:
    Dataset(DatasetManifest manifest, std::vector<std::array<Tensor<float>, 2>> images);

    const DatasetManifest& manifest() const { return manifest_; }
    const Tensor<float>& images(Index cls, Domain d) const;
    Index samples(Index cls, Domain d) const { return images(cls, d).extent(0); }
    const std::vector<Index>& classes(Split s) const { return manifest_.split(s); }
    Index height() const { return manifest_.height; }
    Index width() const { return manifest_.width; }
    Index channels() const { return manifest_.channels; }

    /// Stacks the referenced images into [B,H,W,C].
    template <typename S>
    Tensor<S> gather(std::span<const ImageRef> refs) const;
    template <typename S>
    Tensor<S> gather(std::span<const TargetRef> refs) const;

    static TargetRef target_ref(Index cls, Index sample) { return TargetRef(cls, sample); }

private:
    DatasetManifest manifest_;
    std::vector<std::array<Tensor<float>, 2>> images_;
};

std::string class_file_name(Index cls, Domain d);

/// Writes manifest.json and one tensor file per (class, domain). Refuses an
/// existing directory unless `force`.
void save_dataset(const std::string& dir, const Dataset& dataset, bool force);

/// Reads and validates a dataset directory: manifest invariants, per-file
/// checksums and extents.
Dataset load_dataset(const std::string& dir);

}  // namespace fsuda

#endif  // FSUDA_DATASET_HPP
