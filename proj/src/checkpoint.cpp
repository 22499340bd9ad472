#include "dmads/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "dmads/config.hpp"
#include "dmads/error.hpp"

namespace dmads {

namespace fs = std::filesystem;

namespace {

constexpr std::uint8_t kMagic[4] = {'D', 'M', 'A', 'D'};

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void raw(const std::uint8_t* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
    std::vector<std::uint8_t>& bytes() { return out_; }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    std::uint8_t u8() { return *take(1); }
    std::uint32_t u32() {
        const std::uint8_t* p = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        const std::uint8_t* p = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        return v;
    }
    const std::uint8_t* take(std::size_t n) {
        if (n > size_ - pos_) throw CheckpointError("checkpoint is corrupt: truncated body");
        const std::uint8_t* p = data_ + pos_;
        pos_ += n;
        return p;
    }
    bool done() const { return pos_ == size_; }

private:
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

std::size_t dtype_size(DType t) {
    switch (t) {
        case DType::f32: return 4;
        case DType::f64: return 8;
        case DType::u8: return 1;
    }
    throw CheckpointError("checkpoint is corrupt: unknown dtype");
}

template <typename T>
constexpr DType dtype_of() {
    return sizeof(T) == 8 ? DType::f64 : DType::f32;
}

template <typename T>
void append_le(std::vector<std::uint8_t>& out, std::span<const T> values) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    for (T v : values) {
        U bits;
        std::memcpy(&bits, &v, sizeof(bits));
        for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
}

template <typename T>
void read_le(const std::vector<std::uint8_t>& in, std::span<T> values) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    for (std::size_t k = 0; k < values.size(); ++k) {
        U bits = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(in[k * sizeof(U) + i]) << (8 * i);
        std::memcpy(&values[k], &bits, sizeof(bits));
    }
}

std::string hex(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << v;
    return os.str();
}

}  // namespace

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
    for (const CheckpointEntry& e : entries) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

nn::ModelConfig Checkpoint::config() const {
    const CheckpointEntry* e = find(kConfigEntry);
    if (e == nullptr || e->dtype != DType::u8) {
        throw CheckpointError("checkpoint has no model configuration entry");
    }
    return parse_model_config(std::string(e->bytes.begin(), e->bytes.end()));
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.raw(kMagic, 4);
    w.u32(ckpt.version);
    w.u64(ckpt.digest);
    w.u32(static_cast<std::uint32_t>(ckpt.entries.size()));
    for (const CheckpointEntry& e : ckpt.entries) {
        w.u32(static_cast<std::uint32_t>(e.name.size()));
        w.raw(reinterpret_cast<const std::uint8_t*>(e.name.data()), e.name.size());
        w.u8(static_cast<std::uint8_t>(e.dtype));
        w.u8(static_cast<std::uint8_t>(e.dims.size()));
        for (std::uint32_t d : e.dims) w.u32(d);
        w.raw(e.bytes.data(), e.bytes.size());
    }
    const std::uint64_t sum = fnv1a64(w.bytes().data(), w.bytes().size());
    w.u64(sum);
    return std::move(w.bytes());
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw CheckpointError("not a checkpoint: bad magic");
    }
    if (bytes.size() < 4 + 4 + 8 + 4 + 8) {
        throw CheckpointError("checkpoint is corrupt: file too short");
    }
    const std::size_t body = bytes.size() - 8;
    Reader tail(bytes.data() + body, 8);
    const std::uint64_t stored = tail.u64();
    const std::uint64_t actual = fnv1a64(bytes.data(), body);
    if (stored != actual) {
        throw CheckpointError("checkpoint is corrupt: checksum " + hex(actual) + " does not match stored " +
                              hex(stored));
    }
    Reader r(bytes.data() + 4, body - 4);
    Checkpoint ckpt;
    ckpt.version = r.u32();
    if (ckpt.version > kCheckpointVersion) {
        throw CheckpointError("unsupported version " + std::to_string(ckpt.version) + " (reader supports " +
                              std::to_string(kCheckpointVersion) + ")");
    }
    ckpt.digest = r.u64();
    const std::uint32_t count = r.u32();
    for (std::uint32_t k = 0; k < count; ++k) {
        CheckpointEntry e;
        const std::uint32_t len = r.u32();
        const std::uint8_t* name = r.take(len);
        e.name.assign(reinterpret_cast<const char*>(name), len);
        const std::uint8_t tag = r.u8();
        if (tag > 2) throw CheckpointError("checkpoint is corrupt: unknown dtype " + std::to_string(tag));
        e.dtype = static_cast<DType>(tag);
        const std::uint8_t rank = r.u8();
        std::uint64_t numel = 1;
        for (std::uint8_t d = 0; d < rank; ++d) {
            e.dims.push_back(r.u32());
            numel *= e.dims.back();
        }
        const std::uint64_t size = numel * dtype_size(e.dtype);
        if (size > body) throw CheckpointError("checkpoint is corrupt: entry '" + e.name + "' is too large");
        const std::uint8_t* p = r.take(static_cast<std::size_t>(size));
        e.bytes.assign(p, p + size);
        ckpt.entries.push_back(std::move(e));
    }
    if (!r.done()) {
        throw CheckpointError("checkpoint is corrupt: trailing bytes after the last entry");
    }
    return ckpt;
}

template <typename T>
Checkpoint make_checkpoint(const nn::ParameterStore<T>& params, const nn::ModelConfig& cfg) {
    Checkpoint ckpt;
    ckpt.digest = cfg.digest();
    const std::string text = model_config_text(cfg);
    ckpt.entries.push_back({kConfigEntry, DType::u8, {static_cast<std::uint32_t>(text.size())},
                            std::vector<std::uint8_t>(text.begin(), text.end())});
    for (const auto& [name, tensor] : params.entries()) {
        const Shape& s = tensor.shape();
        CheckpointEntry e{name, dtype_of<T>(),
                          {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                           static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)},
                          {}};
        e.bytes.reserve(tensor.numel() * sizeof(T));
        append_le<T>(e.bytes, tensor.data());
        ckpt.entries.push_back(std::move(e));
    }
    return ckpt;
}

template <typename T>
void save_checkpoint(const fs::path& path, const nn::ParameterStore<T>& params, const nn::ModelConfig& cfg) {
    const std::vector<std::uint8_t> bytes = encode_checkpoint(make_checkpoint(params, cfg));
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw CheckpointError("cannot write checkpoint '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw CheckpointError("cannot move checkpoint into place at '" + path.string() + "': " + ec.message());
}

Checkpoint read_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

template <typename T>
void load_parameters(const Checkpoint& ckpt, nn::ParameterStore<T>& params, const nn::ModelConfig& cfg) {
    if (ckpt.digest != cfg.digest()) {
        throw CheckpointError("checkpoint is incompatible with the requested model: config digest " +
                              hex(ckpt.digest) + " != " + hex(cfg.digest()));
    }
    std::size_t tensors = 0;
    for (const CheckpointEntry& e : ckpt.entries) tensors += e.name == kConfigEntry ? 0 : 1;
    if (tensors != params.size()) {
        throw CheckpointError("checkpoint holds " + std::to_string(tensors) + " tensors, model has " +
                              std::to_string(params.size()));
    }
    for (const auto& [name, tensor] : params.entries()) {
        const CheckpointEntry* e = ckpt.find(name);
        if (e == nullptr) throw CheckpointError("checkpoint lacks parameter '" + name + "'");
        const Shape& s = tensor.shape();
        const std::vector<std::uint32_t> dims{static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                                              static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
        if (e->dtype != dtype_of<T>() || e->dims != dims) {
            throw CheckpointError("checkpoint parameter '" + name + "' does not match the model's " + s.str());
        }
        Tensor<T> dst = tensor;
        read_le<T>(e->bytes, dst.mutable_data());
    }
}

nn::DmadsNet<float> load_model(const fs::path& path) {
    const Checkpoint ckpt = read_checkpoint(path);
    nn::DmadsNet<float> net(ckpt.config());
    load_parameters(ckpt, net.parameters(), net.config());
    return net;
}

template Checkpoint make_checkpoint(const nn::ParameterStore<float>&, const nn::ModelConfig&);
template Checkpoint make_checkpoint(const nn::ParameterStore<double>&, const nn::ModelConfig&);
template void save_checkpoint(const fs::path&, const nn::ParameterStore<float>&, const nn::ModelConfig&);
template void save_checkpoint(const fs::path&, const nn::ParameterStore<double>&, const nn::ModelConfig&);
template void load_parameters(const Checkpoint&, nn::ParameterStore<float>&, const nn::ModelConfig&);
template void load_parameters(const Checkpoint&, nn::ParameterStore<double>&, const nn::ModelConfig&);

}  // namespace dmads
