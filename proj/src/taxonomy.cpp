#include "taxonomy.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "error.hpp"

namespace nearmiss {

namespace {

// 16 -> 7: crossing / hitting / overtaking a participant collapse into
// "Hitting <participant>"; roadblock and road-facility impacts are
// single-vehicle events and join Self-accident.
// 7 -> 4: cyclists, motorbikes, trucks and cars are vehicles; self-accidents
// are obstacle impacts.
constexpr std::string_view kTaxonomyV1 = R"({
  "version": "taxonomy-v1",
  "levels": {
    "1": ["Hitting pedestrian", "Hitting vehicles", "Hitting obstacles", "Normal"],
    "2": ["Hitting pedestrian", "Hitting cyclist", "Hitting motorbike", "Hitting truck",
          "Hitting car", "Self-accident", "Normal"],
    "3": ["Crossing pedestrian", "Hitting pedestrian", "Crossing cyclist", "Hitting cyclist",
          "Crossing motorbike", "Hitting motorbike", "Crossing truck", "Hitting truck",
          "Overtaking truck", "Crossing car", "Hitting car", "Overtaking car",
          "Hitting roadblocks", "Hitting road facilities", "Self-accident", "Normal"]
  },
  "map_16_to_7": [0, 0, 1, 1, 2, 2, 3, 3, 3, 4, 4, 4, 5, 5, 5, 6],
  "map_16_to_4": [0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 2, 2, 2, 3]
}
)";

constexpr std::array<int, 3> kLevelSizes{4, 7, 16};

void check_level(int level) {
    if (level < 1 || level > 3)
        fail(ErrorKind::Domain, "taxonomy level must be 1, 2 or 3 (got " + std::to_string(level) + ")");
}

std::array<int, kFineClassCount> read_map(const nlohmann::json& j, const char* key, int target_size) {
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != kFineClassCount)
        fail(ErrorKind::Parse, std::string("taxonomy: '") + key + "' must be an array of 16 ids");
    std::array<int, kFineClassCount> out{};
    std::set<int> image;
    for (int i = 0; i < kFineClassCount; ++i) {
        if (!j[key][i].is_number_integer())
            fail(ErrorKind::Parse, std::string("taxonomy: '") + key + "' entries must be integers");
        const int v = j[key][i].get<int>();
        if (v < 0 || v >= target_size)
            fail(ErrorKind::Validation, std::string("taxonomy: '") + key + "' entry out of range");
        out[i] = v;
        image.insert(v);
    }
    if (static_cast<int>(image.size()) != target_size)
        fail(ErrorKind::Validation, std::string("taxonomy: '") + key + "' is not surjective");
    if (out[kFineNormal] != target_size - 1)
        fail(ErrorKind::Validation, std::string("taxonomy: '") + key + "' must map Normal to Normal");
    return out;
}

}  // namespace

const ClassTaxonomy& TaxonomySet::at(int level) const {
    check_level(level);
    return levels[level - 1];
}

TaxonomySet parse_taxonomy(std::string_view json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, std::string("taxonomy: ") + e.what());
    }
    TaxonomySet set;
    if (!j.is_object()) fail(ErrorKind::Parse, "taxonomy: document must be an object");
    set.version = j.value("version", "");
    if (set.version.empty()) fail(ErrorKind::Parse, "taxonomy: missing version");
    for (int level = 1; level <= 3; ++level) {
        auto& tax = set.levels[level - 1];
        tax.level = level;
        try {
            tax.labels = j.at("levels").at(std::to_string(level)).get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception&) {
            fail(ErrorKind::Parse, "taxonomy: level " + std::to_string(level) + " missing or not a label list");
        }
        if (tax.size() != kLevelSizes[level - 1])
            fail(ErrorKind::Validation, "taxonomy: level " + std::to_string(level) + " has wrong size");
        if (tax.labels.back() != "Normal")
            fail(ErrorKind::Validation, "taxonomy: last label must be Normal");
    }
    for (int i = 0; i < kFineClassCount; ++i) set.levels[2].coarsen_map[i] = i;
    set.levels[1].coarsen_map = read_map(j, "map_16_to_7", 7);
    set.levels[0].coarsen_map = read_map(j, "map_16_to_4", 4);
    return set;
}

TaxonomySet load_taxonomy(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open taxonomy file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_taxonomy(ss.str());
}

std::string_view default_taxonomy_json() { return kTaxonomyV1; }

const TaxonomySet& default_taxonomy() {
    static const TaxonomySet set = parse_taxonomy(kTaxonomyV1);
    return set;
}

int taxonomy_size(int level) {
    check_level(level);
    return kLevelSizes[level - 1];
}

int map_class(int class16, int level, const TaxonomySet& tax) {
    if (class16 < 0 || class16 >= kFineClassCount)
        fail(ErrorKind::Domain, "unknown class id " + std::to_string(class16));
    return tax.at(level).coarsen_map[class16];
}

int map_class(int class16, int level) { return map_class(class16, level, default_taxonomy()); }

int fine_class_from_label(std::string_view label) {
    const auto& labels = default_taxonomy().levels[2].labels;
    for (int i = 0; i < kFineClassCount; ++i)
        if (labels[i] == label) return i;
    fail(ErrorKind::Domain, "unknown class label '" + std::string(label) + "'");
}

const std::string& class_label(int class_id, int level) {
    const auto& tax = default_taxonomy().at(level);
    if (class_id < 0 || class_id >= tax.size())
        fail(ErrorKind::Domain, "class id " + std::to_string(class_id) + " outside level " + std::to_string(level));
    return tax.labels[class_id];
}

}  // namespace nearmiss
