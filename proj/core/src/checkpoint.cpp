#include "pixmamba/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace pixmamba {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
public:
    template <typename U>
    void put(U v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        bytes.insert(bytes.end(), p, p + sizeof(U));
    }
    void put_string(const std::string& s) {
        put(static_cast<std::uint32_t>(s.size()));
        bytes.insert(bytes.end(), s.begin(), s.end());
    }
    std::vector<std::uint8_t> bytes;
};

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t n) : p_(data), end_(data + n) {}

    template <typename U>
    U get() {
        need(sizeof(U));
        U v;
        std::memcpy(&v, p_, sizeof(U));
        p_ += sizeof(U);
        return v;
    }
    std::string get_string() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s(reinterpret_cast<const char*>(p_), n);
        p_ += n;
        return s;
    }
    const std::uint8_t* take(std::size_t n) {
        need(n);
        const auto* q = p_;
        p_ += n;
        return q;
    }
    bool done() const { return p_ == end_; }

private:
    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end_ - p_) < n) throw FormatError("checkpoint is truncated");
    }
    const std::uint8_t* p_;
    const std::uint8_t* end_;
};

struct Decoded {
    ModelConfig config;
    std::vector<std::pair<std::string, Tensor<float>>> records;
};

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Decoded decode(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "PXMB", 4) != 0) throw FormatError("not a PXMB checkpoint");
    if (bytes.size() < 6 + sizeof(std::uint64_t)) throw FormatError("checkpoint is truncated");
    Reader header(bytes.data() + 4, 2);
    const auto version = header.get<std::uint16_t>();
    if (version != kCheckpointVersion) {
        throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(kCheckpointVersion) + ")");
    }
    const std::size_t body = bytes.size() - sizeof(std::uint64_t);
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + body, sizeof(stored));
    if (fnv1a64(bytes.data(), body) != stored) throw ChecksumError("checkpoint checksum mismatch");

    Reader r(bytes.data() + 6, body - 6);
    Decoded d;
    d.config = ModelConfig::parse(r.get_string());
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        auto path = r.get_string();
        const auto rank = r.get<std::uint32_t>();
        Shape shape;
        for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(static_cast<std::int64_t>(r.get<std::uint64_t>()));
        const auto n = static_cast<std::size_t>(numel_of(shape));
        std::vector<float> values(n);
        std::memcpy(values.data(), r.take(n * sizeof(float)), n * sizeof(float));
        d.records.emplace_back(std::move(path), Tensor<float>(std::move(shape), std::move(values)));
    }
    if (!r.done()) throw FormatError("trailing bytes after the last checkpoint record");
    return d;
}

void fill(PixMamba<float>& model, const Decoded& d) {
    std::map<std::string, const Tensor<float>*> stored;
    for (const auto& [p, t] : d.records) stored[p] = &t;
    for (const auto& [path, param] : model.parameters().entries()) {
        auto it = stored.find(path);
        if (it == stored.end()) throw ParameterShapeError("checkpoint has no record for parameter " + path);
        if (it->second->shape() != param.shape()) {
            throw ParameterShapeError("parameter " + path + " has shape " + to_string(param.shape()) +
                                      " but the checkpoint stores " + to_string(it->second->shape()));
        }
    }
    for (const auto& [p, t] : d.records) {
        if (model.parameters().find(p) == nullptr) {
            throw ParameterShapeError("checkpoint record " + p + " does not match any model parameter");
        }
    }
    for (const auto& [path, param] : model.parameters().entries()) {
        auto dst = param;
        auto src = stored[path]->data();
        std::copy(src.begin(), src.end(), dst.mutable_data().begin());
    }
}

}  // namespace

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::uint8_t> encode_checkpoint(const PixMamba<float>& model) {
    Writer w;
    w.bytes = {'P', 'X', 'M', 'B'};
    w.put(kCheckpointVersion);
    w.put_string(model.config().to_text());
    const auto& entries = model.parameters().entries();
    w.put(static_cast<std::uint32_t>(entries.size()));
    for (const auto& [path, t] : entries) {
        w.put_string(path);
        w.put(static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) w.put(static_cast<std::uint64_t>(d));
        const auto* p = reinterpret_cast<const std::uint8_t*>(t.data().data());
        w.bytes.insert(w.bytes.end(), p, p + t.numel() * sizeof(float));
    }
    w.put(fnv1a64(w.bytes.data(), w.bytes.size()));
    return std::move(w.bytes);
}

void save_checkpoint(const PixMamba<float>& model, const std::string& path) {
    const auto bytes = encode_checkpoint(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint " + path);
}

PixMamba<float> load_checkpoint(const std::string& path) {
    const auto d = decode(read_file(path));
    PixMamba<float> model(d.config);
    fill(model, d);
    return model;
}

void load_checkpoint_into(PixMamba<float>& model, const std::string& path) {
    fill(model, decode(read_file(path)));
}

ModelConfig read_checkpoint_config(const std::string& path) {
    return decode(read_file(path)).config;
}

}  // namespace pixmamba
