#ifndef FSUDA_SYNTHETIC_HPP
#define FSUDA_SYNTHETIC_HPP

#include "fsuda/dataset.hpp"

#include <cstdint>
#include <string>

namespace fsuda {

inline constexpr const char* kGeneratorVersion = "fsuda-glyphs-2";

/// Procedural two-domain glyph dataset. Each class is a union of strokes
/// drawn from a class seed; the source domain renders filled shaded shapes,
/// the target domain renders them at low contrast with speckle and pixel noise.
struct SyntheticSpec {
    Index train_classes = 40;
    Index val_classes = 10;
    Index test_classes = 10;
    Index samples = 30;
    Index height = 32;
    Index width = 32;
    Index min_strokes = 2;
    Index max_strokes = 4;
    /// Pixel noise standard deviation in the target domain.
    double noise = 0.15;
    std::uint64_t seed = 1;

    Index classes() const { return train_classes + val_classes + test_classes; }
    void validate() const;
};

/// Seed of the glyph for one class.
std::uint64_t class_seed(const SyntheticSpec& spec, Index cls);

/// One image [H,W,1] in [0,1]; a pure function of (class seed, sample, domain).
Tensor<float> render_sample(const SyntheticSpec& spec, Index cls, Index sample, Domain domain);

/// Builds the in-memory dataset. Classes render in parallel; the result does
/// not depend on the thread count. Splits assign consecutive class ranges.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// generate_synthetic followed by save_dataset.
void write_synthetic(const std::string& dir, const SyntheticSpec& spec, bool force);

}  // namespace fsuda

#endif  // FSUDA_SYNTHETIC_HPP
