#include "split.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "error.hpp"
#include "random.hpp"

namespace nearmiss {

SplitMode split_mode_from_string(std::string_view s) {
    if (s == "independent") return SplitMode::Independent;
    if (s == "grouped") return SplitMode::Grouped;
    fail(ErrorKind::Usage, "split mode must be 'independent' or 'grouped'");
}

std::string_view to_string(SplitMode m) { return m == SplitMode::Independent ? "independent" : "grouped"; }

namespace {

struct Targets {
    std::size_t train, test, validate;
};

Targets targets_for(std::size_t n, SplitRatios r) {
    const auto tr = static_cast<std::size_t>(std::floor(r.train * static_cast<double>(n) + 1e-9));
    const auto te = static_cast<std::size_t>(std::floor(r.test * static_cast<double>(n) + 1e-9));
    return {tr, te, n - tr - te};
}

}  // namespace

SplitAssignment split_dataset(const std::vector<SplitItem>& items, SplitMode mode, std::uint64_t seed,
                              SplitRatios ratios) {
    if (items.size() < 3) fail(ErrorKind::Domain, "split needs at least 3 clips (got " + std::to_string(items.size()) + ")");
    if (!(ratios.train > 0 && ratios.test >= 0 && ratios.train + ratios.test <= 1.0))
        fail(ErrorKind::Domain, "invalid split ratios");
    SplitAssignment out;
    out.seed = seed;
    out.mode = mode;

    if (mode == SplitMode::Independent) {
        for (auto prov : {Provenance::Original, Provenance::Fake1, Provenance::Fake2}) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < items.size(); ++i)
                if (items[i].provenance == prov) idx.push_back(i);
            Rng rng(mix_seed(seed, to_string(prov)));
            rng.shuffle(idx.begin(), idx.end());
            const auto t = targets_for(idx.size(), ratios);
            out.train.insert(out.train.end(), idx.begin(), idx.begin() + static_cast<long>(t.train));
            out.test.insert(out.test.end(), idx.begin() + static_cast<long>(t.train),
                            idx.begin() + static_cast<long>(t.train + t.test));
            out.validate.insert(out.validate.end(), idx.begin() + static_cast<long>(t.train + t.test), idx.end());
        }
    } else {
        std::vector<std::string> order;
        std::map<std::string, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < items.size(); ++i) {
            auto& g = groups[items[i].source_video_id];
            if (g.empty()) order.push_back(items[i].source_video_id);
            g.push_back(i);
        }
        Rng rng(mix_seed(seed, "grouped"));
        rng.shuffle(order.begin(), order.end());
        const auto t = targets_for(items.size(), ratios);
        const std::size_t target[3] = {t.train, t.test, t.validate};
        std::vector<std::size_t>* part[3] = {&out.train, &out.test, &out.validate};
        // Each group goes wherever the remaining deficit is largest.
        for (const auto& id : order) {
            int best = 0;
            double best_deficit = -1e300;
            for (int p = 0; p < 3; ++p) {
                const double deficit = static_cast<double>(target[p]) - static_cast<double>(part[p]->size());
                if (deficit > best_deficit) {
                    best_deficit = deficit;
                    best = p;
                }
            }
            const auto& g = groups[id];
            part[best]->insert(part[best]->end(), g.begin(), g.end());
        }
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    std::sort(out.validate.begin(), out.validate.end());
    return out;
}

}  // namespace nearmiss
