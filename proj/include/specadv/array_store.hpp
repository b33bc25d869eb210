#pragma once

#include <map>
#include <string>
#include <vector>

#include "specadv/autodiff.hpp"

namespace specadv {

// Named f64 arrays in a flat little-endian .bin file plus a .json manifest
// (names, shapes, byte offsets, string/number metadata). Used for model
// parameters and attack result bundles alike.
struct ArrayStore {
    std::vector<std::pair<std::string, Plane>> arrays;  // insertion-ordered
    std::map<std::string, std::string> meta;
    std::map<std::string, double> meta_num;

    void put(const std::string& name, Plane p);
    const Plane& get(const std::string& name) const;
    bool has(const std::string& name) const;
    double num(const std::string& key) const;
    const std::string& str(const std::string& key) const;
};

// path_prefix + ".json" / ".bin"
void save_store(const std::string& path_prefix, const ArrayStore& store);
ArrayStore load_store(const std::string& path_prefix);

}  // namespace specadv
