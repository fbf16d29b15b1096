#include "fsuda/checkpoint.hpp"

#include "fsuda/byte_io.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace fsuda {

namespace {
constexpr char kMagic[4] = {'F', 'S', 'U', 'D'};
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

template <typename S>
std::string encode_checkpoint(const std::vector<const ParameterSet<S>*>& sets) {
    std::string out(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    for (const auto* set : sets)
        for (const auto& p : *set) {
            put_u32(out, static_cast<std::uint32_t>(p.name.size()));
            out += p.name;
            put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
            for (Index e : p.value.shape()) put_u32(out, static_cast<std::uint32_t>(e));
            for (Index i = 0; i < p.value.size(); ++i) put_f32(out, static_cast<float>(p.value[i]));
        }
    return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::string& bytes) {
    ByteReader in(bytes, "checkpoint");
    if (in.take(4) != std::string(kMagic, 4)) throw std::runtime_error("checkpoint: bad magic");
    if (const auto v = in.u32(); v != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(v));
    std::vector<NamedTensor> entries;
    while (!in.done()) {
        NamedTensor e;
        e.name = in.take(in.u32());
        const std::uint32_t rank = in.u32();
        if (rank == 0 || rank > 8) throw std::runtime_error("checkpoint: bad rank for " + e.name);
        Shape shape;
        for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(in.u32());
        Tensor<float> t(shape);
        for (Index i = 0; i < t.size(); ++i) t[i] = in.f32();
        e.value = std::move(t);
        entries.push_back(std::move(e));
    }
    return entries;
}

template <typename S>
void save_checkpoint(const std::string& path, const std::vector<const ParameterSet<S>*>& sets) {
    write_file_atomic(path, encode_checkpoint(sets));
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

template <typename S>
std::size_t assign_parameters(ParameterSet<S>& params, const std::vector<NamedTensor>& entries) {
    std::size_t assigned = 0;
    for (const auto& e : entries) {
        Parameter<S>* p = params.find(e.name);
        if (!p) continue;
        if (p->value.shape() != e.value.shape())
            throw std::runtime_error("checkpoint: " + e.name + " has shape " + shape_string(e.value.shape()) +
                                     ", model expects " + shape_string(p->value.shape()));
        p->value = e.value.template cast<S>();
        ++assigned;
    }
    return assigned;
}

EmbeddingConfig infer_embedding_config(const std::vector<NamedTensor>& entries, Index in_height, Index in_width) {
    std::map<Index, const NamedTensor*> weights;
    for (const auto& e : entries) {
        const std::string prefix = "embed.block";
        const std::string suffix = ".weight";
        if (e.name.rfind(prefix, 0) == 0 && e.name.size() > prefix.size() + suffix.size() &&
            e.name.compare(e.name.size() - suffix.size(), suffix.size(), suffix) == 0)
            weights[std::stoll(e.name.substr(prefix.size(), e.name.size() - prefix.size() - suffix.size()))] = &e;
    }
    if (weights.empty()) throw std::runtime_error("checkpoint holds no embedding weights");
    EmbeddingConfig c;
    c.in_height = in_height;
    c.in_width = in_width;
    c.blocks = static_cast<Index>(weights.size());
    c.in_channels = weights.begin()->second->value.extent(2);
    c.channels = weights.begin()->second->value.extent(3);
    c.validate();
    return c;
}

template std::string encode_checkpoint(const std::vector<const ParameterSet<float>*>&);
template std::string encode_checkpoint(const std::vector<const ParameterSet<double>*>&);
template void save_checkpoint(const std::string&, const std::vector<const ParameterSet<float>*>&);
template void save_checkpoint(const std::string&, const std::vector<const ParameterSet<double>*>&);
template std::size_t assign_parameters(ParameterSet<float>&, const std::vector<NamedTensor>&);
template std::size_t assign_parameters(ParameterSet<double>&, const std::vector<NamedTensor>&);

}  // namespace fsuda
