// Acceptance gate: one PASS/FAIL line per headline requirement, non-zero exit on any failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "deepclass/augment.hpp"
#include "deepclass/cli.hpp"
#include "deepclass/errors.hpp"
#include "deepclass/gradcheck.hpp"
#include "deepclass/metrics.hpp"
#include "deepclass/ops.hpp"
#include "deepclass/synthetic.hpp"
#include "deepclass/trainer.hpp"
#include "oracles.hpp"

using namespace deepclass;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(const char* name, const std::function<Outcome()>& check) {
    auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s  %-28s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome table_reproduction() {
    TableCheck check = verify_table1();
    return {check.cells.size() == 35 && check.all_pass(),
            std::to_string(check.passed()) + "/" + std::to_string(check.cells.size()) + " cells"};
}

Outcome table_consistency() {
    std::uint64_t support = 0;
    std::size_t rows_ok = 0;
    for (const PublishedRow& r : published_table()) {
        rows_ok += r.counts.total() == 2005;
        support += r.counts.tp + r.counts.fn;
    }
    return {rows_ok == kClassCount && support == 2005,
            std::to_string(rows_ok) + "/7 rows sum to 2005, support " + std::to_string(support)};
}

Outcome gradient_suite() {
    GradcheckReport rep = run_gradcheck(42, 50, 10);
    bool enough = !rep.results.empty();
    double worst = 0;
    for (const GradcheckResult& r : rep.results) {
        enough = enough && r.cases >= (r.op.starts_with("network") ? 10u : 50u);
        worst = std::max(worst, r.max_error);
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "%zu checks, worst rel error %.2e", rep.results.size(), worst);
    return {enough && rep.all_pass(), buf};
}

Outcome oracle_grid() {
    using deepclass::testing::max_abs_diff;
    using deepclass::testing::random_tensor;
    Rng rng(11, "acceptance/grid");
    auto conv = deepclass::testing::sweep_small_grid(
        [&](std::size_t B, std::size_t C, std::size_t H, std::size_t W, std::size_t k, std::size_t s, std::size_t p) {
            if (conv_output_extent(H, k, s, p) == 0 || conv_output_extent(W, k, s, p) == 0) return -1.0;
            const std::size_t O = 1 + (B + C + H) % 3;
            Tensor x = random_tensor(rng, {B, C, H, W});
            Tensor kr = random_tensor(rng, {O, C, k, k});
            Tensor b = random_tensor(rng, {O});
            return max_abs_diff(conv2d(x, kr, b, s, p), deepclass::testing::naive_conv2d(x, kr, b, s, p));
        });
    auto pool = deepclass::testing::sweep_small_grid(
        [&](std::size_t B, std::size_t C, std::size_t H, std::size_t W, std::size_t k, std::size_t s, std::size_t p) {
            if (p != 0 || k > H || k > W) return -1.0;
            Tensor x = random_tensor(rng, {B, C, H, W});
            return max_abs_diff(maxpool2d(x, PoolParams{k, s}).output, deepclass::testing::naive_maxpool2d(x, k, s));
        });
    char buf[128];
    std::snprintf(buf, sizeof buf, "conv %zu cases (max %.1e), pool %zu cases (max %.1e)", conv.cases, conv.worst,
                  pool.cases, pool.worst);
    return {conv.worst <= 1e-5 && pool.worst <= 1e-5 && conv.cases > 0 && pool.cases > 0, buf};
}

Outcome census() {
    Network net = build_deepclass(42);
    LayerCensus c = net.spec().census();
    Tensor x({1, 3, 128, 128}, 0.5f);
    Shape out = net.infer(x).shape();
    bool ok = c.conv == 11 && c.maxpool == 5 && c.dense == 3 && c.conv + c.dense == 14 && out == Shape{1, 7};
    return {ok, std::to_string(c.conv) + " conv, " + std::to_string(c.maxpool) + " pool, " +
                    std::to_string(c.dense) + " dense, 3x128x128 -> " + std::to_string(out.back()) + " logits"};
}

Outcome augmentation_totals() {
    // Class populations of the training split of the 8010 declared training images.
    const std::array<std::size_t, kClassCount> population{1113, 6705, 514, 327, 1099, 115, 142};
    AugmentTargets targets = default_targets();
    bool totals_ok = plan_augmentation(population, targets).totals() == targets;

    Rng rng(2024, "acceptance/augment-property");
    std::size_t cases = 0, good = 0;
    for (; cases < 200; ++cases) {
        const std::size_t n = 1 + rng.below(300);
        const bool overflow = rng.uniform() < 0.2;
        const std::size_t t = overflow ? kTransformCount * n + 1 + rng.below(50) : rng.below(kTransformCount * n + 1);
        try {
            std::vector<std::size_t> counts = per_image_counts(n, t, ClassLabel::D);
            auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
            good += !overflow && counts.size() == n && std::accumulate(counts.begin(), counts.end(), std::size_t{0}) == t &&
                    *hi - *lo <= 1 && *hi <= kTransformCount && std::is_sorted(counts.rbegin(), counts.rend());
        } catch (const CapacityError&) {
            good += overflow;
        }
    }
    return {totals_ok && good == cases,
            std::string("targets ") + (totals_ok ? "hit exactly" : "missed") + ", property " + std::to_string(good) +
                "/" + std::to_string(cases) + " cases"};
}

constexpr std::uint64_t kOverfitSeed = 42;
constexpr double kOverfitMomentum = 0.0;

struct Reached {
    std::size_t epoch;
};

Outcome overfit() {
    InMemoryImages data = synthetic_color_set(128);
    Network net = build_deepclass(kOverfitSeed);
    TrainConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.momentum = kOverfitMomentum;
    cfg.batch_size = 4;
    cfg.epochs = 50;
    cfg.seed = kOverfitSeed;
    // The evaluation pass runs on the training images with the post-epoch weights.
    std::size_t reached = 0;
    double last_loss = 0;
    try {
        fit(net, data, data, cfg, [&](const EpochRecord& r) {
            last_loss = r.train_loss;
            if (r.eval_acc == 1.0) throw Reached{r.epoch};
        });
    } catch (const Reached& r) {
        reached = r.epoch;
    }
    char buf[128];
    if (reached)
        std::snprintf(buf, sizeof buf, "100%% training accuracy at epoch %zu (loss %.4f)", reached, last_loss);
    else
        std::snprintf(buf, sizeof buf, "not reached in 50 epochs (last loss %.4f)", last_loss);
    return {reached > 0, buf};
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "deepclass_acceptance_determinism";
    fs::remove_all(root);
    std::ostringstream out, err;
    if (run_cli({"synth", "--out", (root / "syn").string()}, out, err) != 0) return {false, "synth: " + err.str()};
    const std::string manifest = (root / "syn" / "manifest.tsv").string();
    for (const char* run : {"a", "b"}) {
        int code = run_cli({"train", "--train-manifest", manifest, "--eval-manifest", manifest, "--checkpoint-dir",
                            (root / run).string(), "--epochs", "2", "--batch", "4", "--seed", "7"},
                           out, err);
        if (code != 0) return {false, std::string("train run ") + run + " exited " + std::to_string(code)};
    }
    std::string ca = slurp(root / "a" / "final.dcls"), cb = slurp(root / "b" / "final.dcls");
    std::string ha = slurp(root / "a" / "history.csv"), hb = slurp(root / "b" / "history.csv");
    fs::remove_all(root);
    bool ok = !ca.empty() && ca == cb && !ha.empty() && ha == hb;
    return {ok, "checkpoint " + std::to_string(ca.size()) + " bytes " + (ca == cb ? "identical" : "differ") +
                    ", history " + (ha == hb ? "identical" : "differs")};
}

}  // namespace

int main() {
    report("table1-reproduction", table_reproduction);
    report("table1-consistency", table_consistency);
    report("gradient-suite", gradient_suite);
    report("oracle-equivalence", oracle_grid);
    report("architecture-census", census);
    report("augmentation-totals", augmentation_totals);
    report("overfit-smoke", overfit);
    report("determinism", determinism);
    std::printf("%s: %d failing\n", failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL", failures);
    return failures == 0 ? 0 : 1;
}
