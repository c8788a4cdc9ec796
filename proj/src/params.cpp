#include "nscr/params.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "nscr/error.hpp"

namespace nscr {

namespace {

constexpr char kMagic[6] = {'N', 'S', 'C', 'R', 'P', 'B'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
    put_u64(out, std::bit_cast<std::uint64_t>(d));
}

struct Reader {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw DataError("parameter file truncated");
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(buf[pos] | (buf[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
};

} // namespace

Tensor2& ParameterStore::create(const std::string& name, Tensor2 value) {
    if (has(name)) throw ConfigError("duplicate parameter name: " + name);
    Entry e;
    e.grad = Tensor2(value.rows, value.cols);
    e.value = std::move(value);
    return entries_.emplace(name, std::move(e)).first->second.value;
}

Tensor2& ParameterStore::value(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("missing parameter: " + name);
    return it->second.value;
}

const Tensor2& ParameterStore::value(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("missing parameter: " + name);
    return it->second.value;
}

Tensor2& ParameterStore::grad(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("missing parameter: " + name);
    return it->second.grad;
}

const Tensor2& ParameterStore::grad(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("missing parameter: " + name);
    return it->second.grad;
}

void ParameterStore::reshape(const std::string& name, Tensor2 value) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("missing parameter: " + name);
    it->second.grad = Tensor2(value.rows, value.cols);
    it->second.value = std::move(value);
}

void ParameterStore::remove(const std::string& name) {
    if (entries_.erase(name) == 0) throw ConfigError("missing parameter: " + name);
}

void ParameterStore::zero_grads() {
    for (auto& [_, e] : entries_) e.grad.fill(0.0);
}

std::vector<std::string> ParameterStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, _] : entries_) out.push_back(name);
    return out;
}

std::vector<std::string> ParameterStore::names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [name, _] : entries_)
        if (name.rfind(prefix, 0) == 0) out.push_back(name);
    return out;
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, e] : entries_) n += e.value.size();
    return n;
}

std::vector<std::uint8_t> ParameterStore::serialize(std::uint64_t config_hash,
                                                    std::uint64_t seed) const {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + sizeof(kMagic));
    put_u16(out, kVersion);
    put_u64(out, config_hash);
    put_u64(out, seed);
    put_u64(out, entries_.size());
    for (const auto& [name, e] : entries_) {
        put_u64(out, name.size());
        out.insert(out.end(), name.begin(), name.end());
        put_u64(out, static_cast<std::uint64_t>(e.value.rows));
        put_u64(out, static_cast<std::uint64_t>(e.value.cols));
        for (double d : e.value.data) put_f64(out, d);
    }
    return out;
}

ParameterStore ParameterStore::deserialize(const std::vector<std::uint8_t>& bytes,
                                           std::uint64_t* config_hash, std::uint64_t* seed) {
    Reader r{bytes};
    if (r.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
        throw DataError("not a parameter file (bad magic)");
    if (r.u16() != kVersion) throw DataError("unsupported parameter file version");
    const std::uint64_t hash = r.u64();
    const std::uint64_t sd = r.u64();
    if (config_hash) *config_hash = hash;
    if (seed) *seed = sd;
    const std::uint64_t count = r.u64();
    ParameterStore store;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = r.u64();
        std::string name = r.str(name_len);
        const int rows = static_cast<int>(r.u64());
        const int cols = static_cast<int>(r.u64());
        Tensor2 t(rows, cols);
        for (auto& d : t.data) d = r.f64();
        if (!t.all_finite()) throw DataError("non-finite value in parameter " + name);
        store.create(name, std::move(t));
    }
    return store;
}

void ParameterStore::save(const std::string& path, std::uint64_t config_hash,
                          std::uint64_t seed) const {
    const auto bytes = serialize(config_hash, seed);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("write failed: " + path);
}

ParameterStore ParameterStore::load(const std::string& path, std::uint64_t* config_hash,
                                    std::uint64_t* seed) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return deserialize(bytes, config_hash, seed);
}

} // namespace nscr
