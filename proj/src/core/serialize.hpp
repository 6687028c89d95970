#ifndef A2V_CORE_SERIALIZE_HPP
#define A2V_CORE_SERIALIZE_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace a2v {

uint32_t crc32(const void* bytes, size_t n, uint32_t seed = 0);

// Single-file container of named double arrays: 8-byte magic, format version,
// JSON text header (array directory + free-form metadata), then raw
// little-endian float64 payload. Every array carries a crc32 that is checked
// on load.
struct ArrayFile {
    static constexpr uint32_t kFormatVersion = 1;

    std::string meta_json = "{}";                 // free-form metadata blob
    std::vector<std::string> order;               // serialization order
    std::map<std::string, Tensor> arrays;

    void put(const std::string& name, Tensor t);
    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const { return arrays.count(name) > 0; }

    void save(const std::string& path) const;
    static ArrayFile load(const std::string& path);
};

void save_tensor(const std::string& path, const Tensor& t, const std::string& meta_json = "{}");
Tensor load_tensor(const std::string& path);

}  // namespace a2v

#endif
