#include "deepclass/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>

#include "bytes.hpp"
#include "deepclass/augment.hpp"
#include "deepclass/dataset.hpp"
#include "deepclass/errors.hpp"
#include "deepclass/gradcheck.hpp"
#include "deepclass/metrics.hpp"
#include "deepclass/network.hpp"
#include "deepclass/synthetic.hpp"
#include "deepclass/trainer.hpp"

namespace deepclass {

namespace fs = std::filesystem;
using detail::read_text_file;
using detail::write_text_file;

namespace {

/// Raised for a failed self-check; mapped to kExitVerifyFailed.
struct VerificationFailed {};

struct PrepareArgs {
    std::string groundtruth;
    std::string images;
    std::string out_dir;
    std::string extension = ".ppm";
    std::size_t eval_count = 161;
    std::uint64_t seed = 42;
};

struct AugmentArgs {
    std::string manifest;
    std::string out_dir;
    std::vector<std::string> targets;
    std::size_t size = 128;
};

struct TrainArgs {
    std::string train_manifest;
    std::string eval_manifest;
    std::string checkpoint_dir;
    TrainConfig config;
};

struct EvalArgs {
    std::string checkpoint;
    std::string manifest;
    std::string out;
    std::string predictions;
    std::size_t batch = 32;
};

struct ReportArgs {
    std::string predictions;
    std::string groundtruth;
    std::string out;
};

struct VerifyArgs {
    std::string fixture;
};

struct GradcheckArgs {
    std::uint64_t seed = 42;
    std::size_t cases = 50;
    std::size_t network_cases = 10;
};

struct SynthArgs {
    std::string out_dir;
    std::size_t size = 128;
};

// Reads a sample manifest or an augmented manifest, told apart by their header rows.
// Relative sample paths are resolved against the manifest's directory.
ManifestImages open_manifest(const fs::path& path, std::size_t height, std::size_t width) {
    if (!fs::exists(path)) throw IoError("manifest not found: " + path.string());
    std::string text = read_text_file(path);
    std::string_view rest = text;
    std::string_view first;
    while (!rest.empty()) {
        std::size_t nl = rest.find('\n');
        first = rest.substr(0, nl);
        rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
        if (!first.empty() && first[0] != '#') break;
    }
    DatasetManifest manifest = first.starts_with("out_path\t") ? to_dataset_manifest(parse_augmented_manifest(text))
                                                                 : parse_manifest(text);
    if (manifest.size() == 0) throw ArgumentError("manifest " + path.string() + " lists no samples");
    return ManifestImages(std::move(manifest), path.parent_path(), height, width);
}

void emit(const std::string& text, const std::string& out_path, std::ostream& out) {
    out << text;
    if (!out_path.empty()) write_text_file(out_path, text);
}

AugmentTargets parse_targets(const std::vector<std::string>& items) {
    AugmentTargets targets = default_targets();
    for (const std::string& item : items) {
        std::size_t eq = item.find('=');
        if (eq == std::string::npos) throw ArgumentError("target '" + item + "' is not CLASS=COUNT");
        std::optional<ClassLabel> c = class_from_name(item.substr(0, eq));
        if (!c) throw ArgumentError("unknown class '" + item.substr(0, eq) + "' in --targets");
        const std::string count = item.substr(eq + 1);
        if (count.empty() || !std::all_of(count.begin(), count.end(), [](unsigned char ch) { return std::isdigit(ch); }))
            throw ArgumentError("target count '" + count + "' for " + item.substr(0, eq) + " is not a number");
        targets[index_of(*c)] = std::stoull(count);
    }
    return targets;
}

std::string format_totals(const std::array<std::size_t, kClassCount>& totals) {
    std::ostringstream os;
    std::size_t sum = 0;
    for (ClassLabel c : kAllClasses) {
        os << class_name(c) << ' ' << totals[index_of(c)] << '\n';
        sum += totals[index_of(c)];
    }
    os << "total " << sum << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------

void cmd_prepare(const PrepareArgs& a, std::ostream& out) {
    DatasetManifest all = parse_groundtruth(read_text_file(a.groundtruth));
    fs::create_directories(a.out_dir);
    for (Sample& s : all.samples)
        s.path = fs::proximate(fs::path(a.images) / (s.image_id + a.extension), a.out_dir).generic_string();
    all.provenance = "ground truth " + fs::path(a.groundtruth).filename().string();
    auto [train, eval] = split_eval(all, a.eval_count, a.seed);
    save_manifest(train, fs::path(a.out_dir) / "train.tsv");
    save_manifest(eval, fs::path(a.out_dir) / "eval.tsv");
    out << "train " << train.size() << "\neval " << eval.size() << '\n';
}

void cmd_augment(const AugmentArgs& a, std::ostream& out) {
    const fs::path path = a.manifest;
    if (!fs::exists(path)) throw IoError("manifest not found: " + path.string());
    DatasetManifest manifest = load_manifest(path);
    AugmentTargets targets = parse_targets(a.targets);
    AugmentPlan plan = plan_augmentation(manifest, targets);
    AugmentedManifest result = run_augmentation(manifest, plan, path.parent_path(), a.out_dir, a.size);
    write_text_file(fs::path(a.out_dir) / "augmented.tsv", format_augmented_manifest(result));
    out << format_totals(result.totals());
}

void cmd_train(const TrainArgs& a, std::ostream& out) {
    TrainConfig cfg = a.config;
    cfg.checkpoint_dir = a.checkpoint_dir;
    cfg.validate();
    Network net = build_deepclass(cfg.seed);
    const NetworkSpec& spec = net.spec();
    ManifestImages train = open_manifest(a.train_manifest, spec.height, spec.width);
    ManifestImages eval = open_manifest(a.eval_manifest, spec.height, spec.width);

    fs::create_directories(a.checkpoint_dir);
    const fs::path history_path = fs::path(a.checkpoint_dir) / "history.csv";
    TrainHistory history;
    try {
        history = fit(net, train, eval, cfg, [&](const EpochRecord& r) {
            char line[160];
            std::snprintf(line, sizeof line, "epoch %zu/%zu loss %.6f train_acc %.6f eval_acc %.6f\n", r.epoch,
                          cfg.epochs, r.train_loss, r.train_acc, r.eval_acc);
            out << line << std::flush;
            history.epochs.push_back(r);
        });
    } catch (const DivergenceError&) {
        write_text_file(history_path, history.to_csv());
        throw;
    }
    write_text_file(history_path, history.to_csv());
    save_checkpoint(net, fs::path(a.checkpoint_dir) / "final.dcls");
    out << "wrote " << (fs::path(a.checkpoint_dir) / "final.dcls").generic_string() << '\n';
}

void cmd_eval(const EvalArgs& a, std::ostream& out) {
    if (!fs::exists(a.checkpoint)) throw IoError("checkpoint not found: " + a.checkpoint);
    Network net = load_checkpoint(a.checkpoint);
    ManifestImages data = open_manifest(a.manifest, net.spec().height, net.spec().width);
    Evaluation ev = evaluate(net, data, a.batch);
    ConfusionMatrix cm = confusion_matrix(ev.truths, ev.predictions);
    emit(render_report(cm, per_class_rows(cm)), a.out, out);

    if (!a.predictions.empty()) {
        std::vector<ScoredImage> rows(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) {
            rows[i].image_id = data.id(i);
            for (std::size_t k = 0; k < kClassCount; ++k) rows[i].scores[k] = ev.probs[i][k];
        }
        write_text_file(a.predictions, format_prediction_csv(rows));
    }
}

void cmd_report(const ReportArgs& a, std::ostream& out) {
    std::vector<ScoredImage> scored = parse_prediction_csv(read_text_file(a.predictions));
    DatasetManifest truth = parse_groundtruth(read_text_file(a.groundtruth));
    std::map<std::string, ClassLabel> labels;
    for (const Sample& s : truth.samples) labels.emplace(s.image_id, s.label);

    std::vector<ClassLabel> truths, preds;
    for (const ScoredImage& row : scored) {
        auto it = labels.find(row.image_id);
        if (it == labels.end()) throw ArgumentError("prediction for unknown image '" + row.image_id + "'");
        std::size_t best = 0;
        for (std::size_t k = 1; k < kClassCount; ++k)
            if (row.scores[k] > row.scores[best]) best = k;
        truths.push_back(it->second);
        preds.push_back(static_cast<ClassLabel>(best));
    }
    ConfusionMatrix cm = confusion_matrix(truths, preds);
    emit(render_report(cm, per_class_rows(cm)), a.out, out);
}

void cmd_verify_metrics(const VerifyArgs& a, std::ostream& out, std::ostream& err) {
    TableCheck check = a.fixture.empty() ? verify_table1() : verify_table(parse_fixture_csv(read_text_file(a.fixture)));
    out << check.render();
    if (!check.all_pass()) {
        for (const CellCheck& c : check.cells)
            if (!c.pass)
                err << "FAIL " << class_name(c.label) << ' ' << c.metric << ": published " << c.published
                    << ", recomputed " << c.recomputed << '\n';
        throw VerificationFailed{};
    }
}

void cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
    GradcheckReport report = run_gradcheck(a.seed, a.cases, a.network_cases);
    out << report.render();
    if (!report.all_pass()) throw VerificationFailed{};
}

void cmd_synth(const SynthArgs& a, std::ostream& out) {
    DatasetManifest m = write_synthetic_set(a.out_dir, a.size);
    out << "wrote " << m.size() << " images and manifest.tsv to " << fs::path(a.out_dir).generic_string() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Deep-CLASS skin lesion classifier: data preparation, augmentation, training and evaluation",
                 "deepclass"};
    app.require_subcommand(1);

    PrepareArgs prepare;
    CLI::App* sub_prepare = app.add_subcommand("prepare", "Split a ground-truth CSV into train/eval manifests");
    sub_prepare->add_option("--groundtruth", prepare.groundtruth, "Ground-truth CSV")->required();
    sub_prepare->add_option("--images", prepare.images, "Directory holding <image_id><ext> files")->required();
    sub_prepare->add_option("--out", prepare.out_dir, "Output directory for train.tsv and eval.tsv")->required();
    sub_prepare->add_option("--eval-count", prepare.eval_count, "Samples held out for evaluation")->capture_default_str();
    sub_prepare->add_option("--ext", prepare.extension, "Image file extension")->capture_default_str();
    sub_prepare->add_option("--seed", prepare.seed, "Root seed (split substream)")->capture_default_str();

    AugmentArgs augment;
    CLI::App* sub_augment = app.add_subcommand("augment", "Expand a manifest by rotation and flipping");
    sub_augment->add_option("--manifest", augment.manifest, "Source manifest TSV")->required();
    sub_augment->add_option("--out", augment.out_dir, "Output directory for images and augmented.tsv")->required();
    sub_augment->add_option("--targets", augment.targets, "Per-class overrides, e.g. M=100,N=200")->delimiter(',');
    sub_augment->add_option("--size", augment.size, "Output image side length")->capture_default_str()->check(
        CLI::PositiveNumber);

    TrainArgs train;
    CLI::App* sub_train = app.add_subcommand("train", "Train the 19-layer network with momentum SGD");
    sub_train->add_option("--train-manifest", train.train_manifest, "Training manifest (plain or augmented)")
        ->required();
    sub_train->add_option("--eval-manifest", train.eval_manifest, "Evaluation manifest (plain or augmented)")
        ->required();
    sub_train->add_option("--checkpoint-dir", train.checkpoint_dir, "Directory for history.csv and checkpoints")
        ->required();
    sub_train->add_option("--lr", train.config.learning_rate, "Learning rate (> 0)")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sub_train->add_option("--momentum", train.config.momentum, "Momentum in [0, 1)")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 0.999999));
    sub_train->add_option("--batch", train.config.batch_size, "Mini-batch size")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sub_train->add_option("--epochs", train.config.epochs, "Number of epochs")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sub_train->add_option("--seed", train.config.seed, "Root seed (init and shuffle substreams)")
        ->capture_default_str();
    sub_train->add_option("--checkpoint-every", train.config.checkpoint_every,
                          "Also save epoch_NNNN.dcls every N epochs (0 = final only)")
        ->capture_default_str();

    EvalArgs eval;
    CLI::App* sub_eval = app.add_subcommand("eval", "Evaluate a checkpoint and print the per-class report");
    sub_eval->add_option("--checkpoint", eval.checkpoint, "Checkpoint file (.dcls)")->required();
    sub_eval->add_option("--manifest", eval.manifest, "Manifest to evaluate (plain or augmented)")->required();
    sub_eval->add_option("--out", eval.out, "Also write the report to this file");
    sub_eval->add_option("--predictions", eval.predictions, "Write per-image class probabilities as CSV");
    sub_eval->add_option("--batch", eval.batch, "Inference batch size")->capture_default_str()->check(
        CLI::PositiveNumber);

    ReportArgs report;
    CLI::App* sub_report = app.add_subcommand("report", "Score a prediction CSV against ground truth");
    sub_report->add_option("--predictions", report.predictions, "Prediction CSV (image + 7 class scores)")
        ->required();
    sub_report->add_option("--groundtruth", report.groundtruth, "Ground-truth CSV")->required();
    sub_report->add_option("--out", report.out, "Also write the report to this file");

    VerifyArgs verify;
    CLI::App* sub_verify = app.add_subcommand("verify-metrics", "Recompute the published per-class metrics table");
    sub_verify->add_option("--fixture", verify.fixture, "Check this fixture CSV instead of the built-in table");

    GradcheckArgs gradcheck;
    CLI::App* sub_gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every analytic gradient");
    sub_gradcheck->add_option("--seed", gradcheck.seed, "Root seed for the random cases")->capture_default_str();
    sub_gradcheck->add_option("--cases", gradcheck.cases, "Random cases per op")->capture_default_str()->check(
        CLI::PositiveNumber);
    sub_gradcheck->add_option("--network-cases", gradcheck.network_cases, "Whole-network cases")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);

    SynthArgs synth;
    CLI::App* sub_synth = app.add_subcommand("synth", "Write the 14-image constant-colour set and its manifest");
    sub_synth->add_option("--out", synth.out_dir, "Output directory")->required();
    sub_synth->add_option("--size", synth.size, "Image side length")->capture_default_str()->check(
        CLI::PositiveNumber);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (sub_prepare->parsed()) cmd_prepare(prepare, out);
        else if (sub_augment->parsed()) cmd_augment(augment, out);
        else if (sub_train->parsed()) cmd_train(train, out);
        else if (sub_eval->parsed()) cmd_eval(eval, out);
        else if (sub_report->parsed()) cmd_report(report, out);
        else if (sub_verify->parsed()) cmd_verify_metrics(verify, out, err);
        else if (sub_gradcheck->parsed()) cmd_gradcheck(gradcheck, out);
        else if (sub_synth->parsed()) cmd_synth(synth, out);
    } catch (const VerificationFailed&) {
        return kExitVerifyFailed;
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << '\n';
        return kExitDiverged;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitOk;
}

}  // namespace deepclass
