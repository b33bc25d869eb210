#include "specadv/array_store.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace specadv {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "array container assumes little-endian doubles");

void ArrayStore::put(const std::string& name, Plane p) {
    for (auto& [n, _] : arrays)
        if (n == name) throw std::invalid_argument("duplicate array name: " + name);
    arrays.emplace_back(name, std::move(p));
}

const Plane& ArrayStore::get(const std::string& name) const {
    for (const auto& [n, p] : arrays)
        if (n == name) return p;
    throw IoError("array not found in container: " + name);
}

bool ArrayStore::has(const std::string& name) const {
    for (const auto& [n, _] : arrays)
        if (n == name) return true;
    return false;
}

double ArrayStore::num(const std::string& key) const {
    auto it = meta_num.find(key);
    if (it == meta_num.end()) throw IoError("missing numeric metadata: " + key);
    return it->second;
}

const std::string& ArrayStore::str(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw IoError("missing metadata: " + key);
    return it->second;
}

void save_store(const std::string& path_prefix, const ArrayStore& store) {
    json manifest;
    manifest["arrays"] = json::array();
    size_t offset = 0;  // in doubles
    std::ofstream bin(path_prefix + ".bin", std::ios::binary);
    if (!bin) throw IoError("cannot open for writing: " + path_prefix + ".bin");
    for (const auto& [name, p] : store.arrays) {
        json a;
        a["name"] = name;
        a["rows"] = p.rows();
        a["cols"] = p.cols();
        a["offset"] = offset;
        manifest["arrays"].push_back(a);
        // column-major, matching Eigen's default layout
        bin.write(reinterpret_cast<const char*>(p.data()),
                  static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(p.size())));
        offset += static_cast<size_t>(p.size());
    }
    if (!bin) throw IoError("write failed: " + path_prefix + ".bin");
    manifest["meta"] = store.meta;
    manifest["meta_num"] = store.meta_num;

    std::ofstream jf(path_prefix + ".json");
    if (!jf) throw IoError("cannot open for writing: " + path_prefix + ".json");
    jf << manifest.dump(2) << "\n";
    if (!jf) throw IoError("write failed: " + path_prefix + ".json");
}

ArrayStore load_store(const std::string& path_prefix) {
    std::ifstream jf(path_prefix + ".json");
    if (!jf) throw IoError("cannot open: " + path_prefix + ".json");
    json manifest;
    try {
        jf >> manifest;
    } catch (const json::exception& e) {
        throw IoError("corrupt manifest " + path_prefix + ".json: " + e.what());
    }

    std::ifstream bin(path_prefix + ".bin", std::ios::binary);
    if (!bin) throw IoError("cannot open: " + path_prefix + ".bin");
    std::string raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

    ArrayStore store;
    try {
        for (const auto& a : manifest.at("arrays")) {
            const auto rows = a.at("rows").get<Eigen::Index>();
            const auto cols = a.at("cols").get<Eigen::Index>();
            const auto offset = a.at("offset").get<size_t>();
            const size_t bytes = sizeof(double) * static_cast<size_t>(rows * cols);
            if (offset * sizeof(double) + bytes > raw.size())
                throw IoError("binary payload shorter than manifest: " + path_prefix);
            Plane p(rows, cols);
            std::memcpy(p.data(), raw.data() + offset * sizeof(double), bytes);
            store.put(a.at("name").get<std::string>(), std::move(p));
        }
        if (manifest.contains("meta"))
            store.meta = manifest["meta"].get<std::map<std::string, std::string>>();
        if (manifest.contains("meta_num"))
            store.meta_num = manifest["meta_num"].get<std::map<std::string, double>>();
    } catch (const json::exception& e) {
        throw IoError("corrupt manifest " + path_prefix + ".json: " + e.what());
    }
    return store;
}

}  // namespace specadv
