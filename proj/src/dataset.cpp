#include "fsuda/dataset.hpp"

#include "fsuda/checkpoint.hpp"
#include "fsuda/tensor_file.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>
#include <stdexcept>

namespace fsuda {

namespace fs = std::filesystem;
using nlohmann::json;

const char* domain_name(Domain d) { return d == Domain::kSource ? "source" : "target"; }

const char* split_name(Split s) {
    switch (s) {
        case Split::kTrain: return "train";
        case Split::kVal: return "val";
        case Split::kTest: return "test";
    }
    return "?";
}

Split parse_split(const std::string& name) {
    if (name == "train") return Split::kTrain;
    if (name == "val") return Split::kVal;
    if (name == "test") return Split::kTest;
    throw std::invalid_argument("unknown split " + name);
}

const std::vector<Index>& DatasetManifest::split(Split s) const {
    switch (s) {
        case Split::kTrain: return train;
        case Split::kVal: return val;
        case Split::kTest: return test;
    }
    throw std::logic_error("bad split");
}

void DatasetManifest::validate() const {
    if (classes < 1 || samples_per_class < 1 || height < 1 || width < 1 || channels < 1)
        throw std::runtime_error("manifest: non-positive counts or extents");
    std::set<Index> seen;
    for (Split s : {Split::kTrain, Split::kVal, Split::kTest})
        for (Index c : split(s)) {
            if (c < 0 || c >= classes)
                throw std::runtime_error(std::string("manifest: class ") + std::to_string(c) + " in " + split_name(s) +
                                         " split is out of range");
            if (!seen.insert(c).second)
                throw std::runtime_error("manifest: class " + std::to_string(c) + " appears in more than one split");
        }
    if (static_cast<Index>(seen.size()) != classes) throw std::runtime_error("manifest: splits do not cover every class");
    std::set<std::pair<Index, int>> have;
    for (const auto& f : files) {
        if (f.cls < 0 || f.cls >= classes) throw std::runtime_error("manifest: file " + f.file + " names a bad class");
        if (!have.insert({f.cls, static_cast<int>(f.domain)}).second)
            throw std::runtime_error("manifest: duplicate entry for " + f.file);
    }
    for (Index c = 0; c < classes; ++c)
        for (Domain d : {Domain::kSource, Domain::kTarget})
            if (!have.count({c, static_cast<int>(d)}))
                throw std::runtime_error("manifest: class " + std::to_string(c) + " lacks its " + domain_name(d) +
                                         " domain file");
}

std::string DatasetManifest::to_json() const {
    json j;
    j["generator_version"] = generator_version;
    j["seed"] = seed;
    j["classes"] = classes;
    j["samples_per_class"] = samples_per_class;
    j["image"] = {{"height", height}, {"width", width}, {"channels", channels}};
    j["noise"] = noise;
    j["domains"] = {"source", "target"};
    j["splits"] = {{"train", train}, {"val", val}, {"test", test}};
    json fl = json::array();
    for (const auto& f : files)
        fl.push_back({{"class", f.cls}, {"domain", domain_name(f.domain)}, {"file", f.file}, {"crc32", f.crc32}});
    j["files"] = fl;
    return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
    DatasetManifest m;
    try {
        const json j = json::parse(text);
        m.generator_version = j.at("generator_version").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.classes = j.at("classes").get<Index>();
        m.samples_per_class = j.at("samples_per_class").get<Index>();
        m.height = j.at("image").at("height").get<Index>();
        m.width = j.at("image").at("width").get<Index>();
        m.channels = j.at("image").at("channels").get<Index>();
        m.noise = j.at("noise").get<double>();
        m.train = j.at("splits").at("train").get<std::vector<Index>>();
        m.val = j.at("splits").at("val").get<std::vector<Index>>();
        m.test = j.at("splits").at("test").get<std::vector<Index>>();
        for (const auto& f : j.at("files")) {
            const std::string dom = f.at("domain").get<std::string>();
            if (dom != "source" && dom != "target") throw std::runtime_error("unknown domain " + dom);
            m.files.push_back({f.at("class").get<Index>(), dom == "source" ? Domain::kSource : Domain::kTarget,
                               f.at("file").get<std::string>(), f.at("crc32").get<std::uint32_t>()});
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("manifest: ") + e.what());
    }
    return m;
}

Dataset::Dataset(DatasetManifest manifest, std::vector<std::array<Tensor<float>, 2>> stacks)
    : manifest_(std::move(manifest)), images_(std::move(stacks)) {
    manifest_.validate();
    if (static_cast<Index>(images_.size()) != manifest_.classes)
        throw std::runtime_error("dataset: image stacks for " + std::to_string(images_.size()) + " classes, manifest has " +
                                 std::to_string(manifest_.classes));
    const Shape expected{manifest_.samples_per_class, manifest_.height, manifest_.width, manifest_.channels};
    for (Index c = 0; c < manifest_.classes; ++c)
        for (Domain d : {Domain::kSource, Domain::kTarget})
            if (images(c, d).shape() != expected)
                throw std::runtime_error("dataset: class " + std::to_string(c) + " " + domain_name(d) + " images are " +
                                         shape_string(images(c, d).shape()) + ", expected " + shape_string(expected));
}

const Tensor<float>& Dataset::images(Index cls, Domain d) const {
    return images_.at(static_cast<std::size_t>(cls))[static_cast<std::size_t>(d)];
}

template <typename S>
Tensor<S> Dataset::gather(std::span<const ImageRef> refs) const {
    const Index stride = height() * width() * channels();
    Tensor<S> out({static_cast<Index>(refs.size()), height(), width(), channels()});
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const Tensor<float>& stack = images(refs[i].cls, refs[i].domain);
        if (refs[i].sample < 0 || refs[i].sample >= stack.extent(0))
            throw std::out_of_range("dataset: sample index out of range");
        out.values().segment(static_cast<Index>(i) * stride, stride) =
            stack.values().segment(refs[i].sample * stride, stride).template cast<S>();
    }
    return out;
}

template <typename S>
Tensor<S> Dataset::gather(std::span<const TargetRef> refs) const {
    std::vector<ImageRef> resolved;
    resolved.reserve(refs.size());
    for (const auto& r : refs) resolved.push_back({r.cls_, r.sample_, Domain::kTarget});
    return gather<S>(std::span<const ImageRef>(resolved));
}

template Tensor<float> Dataset::gather(std::span<const ImageRef>) const;
template Tensor<double> Dataset::gather(std::span<const ImageRef>) const;
template Tensor<float> Dataset::gather(std::span<const TargetRef>) const;
template Tensor<double> Dataset::gather(std::span<const TargetRef>) const;

std::string class_file_name(Index cls, Domain d) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "class_%03lld_%s.fsud", static_cast<long long>(cls), domain_name(d));
    return buf;
}

namespace {

// A tensor file ends with the CRC of its payload; the CRC of the whole file
// would be the same residue for every file.
std::uint32_t payload_crc(const std::string& bytes) {
    return crc32_of(bytes.substr(0, bytes.size() < 4 ? 0 : bytes.size() - 4));
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& dataset, bool force) {
    if (fs::exists(dir) && !force) throw std::runtime_error(dir + " already exists (use --force to overwrite)");
    fs::create_directories(dir);
    DatasetManifest m = dataset.manifest();
    m.files.clear();
    for (Index c = 0; c < m.classes; ++c)
        for (Domain d : {Domain::kSource, Domain::kTarget}) {
            const std::string bytes = encode_tensor_file(dataset.images(c, d));
            const std::string name = class_file_name(c, d);
            write_file_atomic((fs::path(dir) / name).string(), bytes);
            m.files.push_back({c, d, name, payload_crc(bytes)});
        }
    write_file_atomic((fs::path(dir) / "manifest.json").string(), m.to_json());
}

Dataset load_dataset(const std::string& dir) {
    const fs::path root(dir);
    const fs::path manifest_path = root / "manifest.json";
    if (!fs::exists(manifest_path)) throw std::runtime_error("dataset: missing " + manifest_path.string());
    DatasetManifest m = DatasetManifest::from_json(read_file(manifest_path.string()));
    m.validate();
    std::vector<std::array<Tensor<float>, 2>> images(static_cast<std::size_t>(m.classes));
    for (const auto& f : m.files) {
        const fs::path p = root / f.file;
        if (!fs::exists(p)) throw std::runtime_error("dataset: missing file " + p.string());
        const std::string bytes = read_file(p.string());
        if (payload_crc(bytes) != f.crc32) throw std::runtime_error("dataset: checksum mismatch in " + p.string());
        images[static_cast<std::size_t>(f.cls)][static_cast<std::size_t>(f.domain)] =
            decode_tensor_file(bytes, p.string());
    }
    return Dataset(std::move(m), std::move(images));
}

}  // namespace fsuda
