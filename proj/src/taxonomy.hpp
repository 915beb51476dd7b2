#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace nearmiss {

inline constexpr int kFineClassCount = 16;
inline constexpr int kFineNormal = 15;

/// One level of the incident taxonomy (1 = 4 classes, 2 = 7, 3 = 16).
struct ClassTaxonomy {
    int level = 3;
    std::vector<std::string> labels;
    /// Fine (16-class) id -> id at this level.
    std::array<int, kFineClassCount> coarsen_map{};

    int size() const { return static_cast<int>(labels.size()); }
    int normal_id() const { return size() - 1; }
};

/// The three levels plus the version tag of the coarsening table.
struct TaxonomySet {
    std::string version;
    std::array<ClassTaxonomy, 3> levels;

    const ClassTaxonomy& at(int level) const;
};

/// Built-in versioned table (also shipped as data/taxonomy_v1.json).
const TaxonomySet& default_taxonomy();
std::string_view default_taxonomy_json();

/// Parses and structurally validates a taxonomy document.
TaxonomySet parse_taxonomy(std::string_view json_text);
TaxonomySet load_taxonomy(const std::string& path);

int taxonomy_size(int level);
int map_class(int class16, int level);
int map_class(int class16, int level, const TaxonomySet& tax);

/// Fine class id from a label ("Hitting car") or throws Domain.
int fine_class_from_label(std::string_view label);
const std::string& class_label(int class_id, int level);

}  // namespace nearmiss
