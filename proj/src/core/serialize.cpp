#include "serialize.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace a2v {

using nlohmann::json;

namespace {

std::array<uint32_t, 256> make_crc_table() {
    std::array<uint32_t, 256> table{};
    for (uint32_t i = 0; i < 256; ++i) {
        uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
    return table;
}

constexpr char kMagic[8] = {'A', '2', 'V', 'A', 'R', 'R', '0', '1'};

void check_little_endian() {
    uint32_t probe = 1;
    unsigned char b;
    std::memcpy(&b, &probe, 1);
    if (b != 1) throw std::runtime_error("array container: big-endian hosts are not supported");
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("array container: truncated file");
    return v;
}

}  // namespace

uint32_t crc32(const void* bytes, size_t n, uint32_t seed) {
    static const std::array<uint32_t, 256> table = make_crc_table();
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    uint32_t c = seed ^ 0xffffffffu;
    for (size_t i = 0; i < n; ++i) c = table[(c ^ p[i]) & 0xffu] ^ (c >> 8);
    return c ^ 0xffffffffu;
}

void ArrayFile::put(const std::string& name, Tensor t) {
    if (!has(name)) order.push_back(name);
    arrays[name] = std::move(t);
}

const Tensor& ArrayFile::get(const std::string& name) const {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw std::out_of_range("array container: missing array '" + name + "'");
    return it->second;
}

void ArrayFile::save(const std::string& path) const {
    check_little_endian();
    json dir = json::array();
    uint64_t offset = 0;
    for (const auto& name : order) {
        const Tensor& t = arrays.at(name);
        uint64_t nbytes = static_cast<uint64_t>(t.numel()) * sizeof(double);
        json e;
        e["name"] = name;
        e["shape"] = t.shape;
        e["dtype"] = "f64";
        e["offset"] = offset;
        e["nbytes"] = nbytes;
        e["crc32"] = crc32(t.data.data(), static_cast<size_t>(nbytes));
        dir.push_back(e);
        offset += nbytes;
    }
    json header;
    header["meta"] = json::parse(meta_json);
    header["arrays"] = dir;
    std::string htext = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("array container: cannot open for write: " + path);
    os.write(kMagic, sizeof(kMagic));
    write_pod<uint32_t>(os, kFormatVersion);
    write_pod<uint64_t>(os, htext.size());
    os.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const auto& name : order) {
        const Tensor& t = arrays.at(name);
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("array container: write failed: " + path);
}

ArrayFile ArrayFile::load(const std::string& path) {
    check_little_endian();
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("array container: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("array container: bad magic in " + path);
    uint32_t version = read_pod<uint32_t>(is);
    if (version != kFormatVersion)
        throw std::runtime_error("array container: unsupported format version " + std::to_string(version) +
                                 " (reader supports " + std::to_string(kFormatVersion) + ")");
    uint64_t hlen = read_pod<uint64_t>(is);
    std::string htext(hlen, '\0');
    is.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw std::runtime_error("array container: truncated header in " + path);
    json header = json::parse(htext);

    ArrayFile out;
    out.meta_json = header.at("meta").dump();
    std::streampos payload_start = is.tellg();
    for (const auto& e : header.at("arrays")) {
        std::string name = e.at("name").get<std::string>();
        std::vector<int64_t> shape = e.at("shape").get<std::vector<int64_t>>();
        uint64_t offset = e.at("offset").get<uint64_t>();
        uint64_t nbytes = e.at("nbytes").get<uint64_t>();
        uint32_t want_crc = e.at("crc32").get<uint32_t>();
        Tensor t(shape);
        if (static_cast<uint64_t>(t.numel()) * sizeof(double) != nbytes)
            throw std::runtime_error("array container: shape/nbytes mismatch for '" + name + "'");
        is.seekg(payload_start + static_cast<std::streamoff>(offset));
        is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(nbytes));
        if (!is) throw std::runtime_error("array container: truncated payload for '" + name + "' in " + path);
        uint32_t got_crc = crc32(t.data.data(), static_cast<size_t>(nbytes));
        if (got_crc != want_crc)
            throw std::runtime_error("array container: checksum mismatch for '" + name + "' in " + path);
        out.put(name, std::move(t));
    }
    return out;
}

void save_tensor(const std::string& path, const Tensor& t, const std::string& meta_json) {
    ArrayFile f;
    f.meta_json = meta_json;
    f.put("data", t);
    f.save(path);
}

Tensor load_tensor(const std::string& path) { return ArrayFile::load(path).get("data"); }

}  // namespace a2v
