#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "video.hpp"

namespace nearmiss {

enum class SplitMode { Independent, Grouped };
SplitMode split_mode_from_string(std::string_view s);
std::string_view to_string(SplitMode m);

struct SplitItem {
    std::string clip_id;
    std::string source_video_id;
    Provenance provenance = Provenance::Original;
};

/// Partitions hold indices into the item list, each in ascending order.
struct SplitAssignment {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    std::vector<std::size_t> validate;
    std::uint64_t seed = 0;
    SplitMode mode = SplitMode::Grouped;
};

struct SplitRatios {
    double train = 0.7;
    double test = 0.2;
};

/// independent: each provenance set is shuffled and cut separately.
/// grouped: all clips of one source video land in the same partition.
SplitAssignment split_dataset(const std::vector<SplitItem>& items, SplitMode mode, std::uint64_t seed,
                              SplitRatios ratios = {});

}  // namespace nearmiss
