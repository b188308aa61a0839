#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deepclass/classes.hpp"

namespace deepclass {

/// cell(t, p) counts samples of true class t predicted as p; canonical class order.
class ConfusionMatrix {
public:
    std::uint64_t& cell(ClassLabel truth, ClassLabel pred) { return cells_[index_of(truth)][index_of(pred)]; }
    std::uint64_t cell(ClassLabel truth, ClassLabel pred) const { return cells_[index_of(truth)][index_of(pred)]; }

    std::uint64_t total() const;
    std::uint64_t trace() const;
    std::uint64_t row_sum(ClassLabel truth) const;
    std::uint64_t column_sum(ClassLabel pred) const;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::array<std::array<std::uint64_t, kClassCount>, kClassCount> cells_{};
};

/// Throws ArgumentError on length mismatch or empty input.
ConfusionMatrix confusion_matrix(std::span<const ClassLabel> truths, std::span<const ClassLabel> preds);

struct BinaryCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + fp + tn + fn; }
    friend bool operator==(const BinaryCounts&, const BinaryCounts&) = default;
};

BinaryCounts one_vs_rest(const ConfusionMatrix& cm, ClassLabel c);

/// Ratio as an integer percent, rounded half away from zero.
int render_percent(double ratio);

struct ClassMetrics {
    double accuracy = 0;
    double f_measure = 0;
    double precision = 0;
    double recall = 0;
    double specificity = 0;

    /// Rounded integer percents in the order accuracy, F, precision, recall, specificity.
    std::array<int, 5> rendered() const;
};

/// 0/0 ratios are 0. Throws ArgumentError when all counts are zero.
ClassMetrics class_metrics(const BinaryCounts& b);

/// Column names of the metrics table, in order.
inline constexpr std::array<const char*, 10> kReportColumns{"Disease", "TP",   "FP",   "TN",         "FN",
                                                            "Acc.",    "F-meas.", "Pre.", "Rec.(Sen.)", "Spe."};

inline constexpr std::array<const char*, 5> kMetricNames{"Acc.", "F-meas.", "Pre.", "Rec.(Sen.)", "Spe."};

struct ClassRow {
    ClassLabel label = ClassLabel::M;
    BinaryCounts counts;
    ClassMetrics metrics;
};

std::vector<ClassRow> per_class_rows(const ConfusionMatrix& cm);

/// Fixed-width metrics table (header + one row per class in the given order).
std::string render_table(std::span<const ClassRow> rows);

/// Metrics table in canonical order, overall accuracy, then the 7 x 7 matrix.
std::string render_report(const ConfusionMatrix& cm, std::span<const ClassRow> rows);

// --- published per-class evaluation fixture --------------------------------

struct PublishedRow {
    ClassLabel label = ClassLabel::M;
    BinaryCounts counts;
    std::array<int, 5> percents{};  // Acc, F, Pre, Rec, Spe
};

/// The seven published rows, listed AK, BCC, D, M, N, PBK, VL.
std::span<const PublishedRow> published_table();

struct CellCheck {
    ClassLabel label = ClassLabel::M;
    const char* metric = "";
    int published = 0;
    int recomputed = 0;
    bool pass = false;
};

struct TableCheck {
    std::vector<CellCheck> cells;  // 7 x 5
    std::size_t passed() const;
    bool all_pass() const { return passed() == cells.size(); }
    std::string render() const;
};

TableCheck verify_table(std::span<const PublishedRow> rows);
inline TableCheck verify_table1() { return verify_table(published_table()); }

/// Reads a fixture in CSV form `class,tp,fp,tn,fn,acc,f,pre,rec,spe` (header line required).
std::vector<PublishedRow> parse_fixture_csv(const std::string& csv);

}  // namespace deepclass
