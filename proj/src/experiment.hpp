#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cst.hpp"
#include "reports.hpp"
#include "split.hpp"
#include "training.hpp"

namespace nearmiss {

struct CellSpec {
    int phi = 0;
    bool baseline = false;  // baseline annotation vs re-annotation
    DatasetMode mode = DatasetMode::Originals;
    int clip_len = 16;
};

/// φ1-3 baseline/V, φ4-6 re-annotation/V, φ7-9 re-annotation/X over 16/32/64.
std::vector<CellSpec> experiment_cells(const std::vector<int>& phis);

struct ExperimentConfig {
    std::string run_name;  // empty: timestamp
    std::filesystem::path output_root;
    std::filesystem::path videos;
    std::filesystem::path annotations;
    std::filesystem::path baseline_annotations;
    std::filesystem::path overrides;           // marks for the re-annotated set
    std::filesystem::path baseline_overrides;  // marks for the baseline set (report only)
    int level = 1;
    int height = 32;
    int width = 32;
    std::vector<int> cells = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<std::uint64_t> seeds = {0};
    SplitMode split_mode = SplitMode::Grouped;
    std::string classifier_preset = "toy";
    int width_divisor = 8;
    std::string pretrained;
    TrainConfig train;
    std::string cst_preset = "toy";
    CstTrainConfig cst;
    std::string fakes_for = "all";  // all | train
    EncoderRule encoder_rule = EncoderRule::ClipDomain;
    int timeline_phi = 8;
    int timeline_stride = 1;
    std::filesystem::path crossval_annotations;
    std::filesystem::path crossval_videos;
    std::vector<int> crossval_phis = {5, 8};

    void validate() const;
    nlohmann::ordered_json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
};

/// Output root used when the config leaves it empty: $NEARMISS_OUTPUT_ROOT or "runs".
std::filesystem::path default_output_root();

struct ExperimentResult {
    std::filesystem::path run_dir;
    std::vector<CellResult> cells;
    bool all_ok() const;
};

/// Text listing of the resolved matrix (used by --dry-run).
std::string describe_matrix(const ExperimentConfig& cfg);

ExperimentResult run_experiment_matrix(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace nearmiss
