#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nscr/tensor.hpp"

namespace nscr {

// Registry of named trainable tensors with matching gradient slots.
// One training session owns a store; snapshots may be shared read-only.
class ParameterStore {
public:
    struct Entry {
        Tensor2 value;
        Tensor2 grad;
    };

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    // Registers a new parameter; rejects duplicate names.
    Tensor2& create(const std::string& name, Tensor2 value);

    Tensor2& value(const std::string& name);
    const Tensor2& value(const std::string& name) const;
    Tensor2& grad(const std::string& name);
    const Tensor2& grad(const std::string& name) const;

    // Replaces a parameter value (shape may change); grad is re-zeroed.
    void reshape(const std::string& name, Tensor2 value);
    void remove(const std::string& name);

    void zero_grads();

    std::vector<std::string> names() const;
    std::vector<std::string> names_with_prefix(const std::string& prefix) const;
    std::size_t scalar_count() const;

    // Flat binary format: version header, then sorted (name, rows, cols,
    // row-major doubles) records, all little-endian.
    std::vector<std::uint8_t> serialize(std::uint64_t config_hash = 0, std::uint64_t seed = 0) const;
    static ParameterStore deserialize(const std::vector<std::uint8_t>& bytes,
                                      std::uint64_t* config_hash = nullptr,
                                      std::uint64_t* seed = nullptr);

    void save(const std::string& path, std::uint64_t config_hash = 0, std::uint64_t seed = 0) const;
    static ParameterStore load(const std::string& path, std::uint64_t* config_hash = nullptr,
                               std::uint64_t* seed = nullptr);

private:
    std::map<std::string, Entry> entries_;
};

} // namespace nscr
