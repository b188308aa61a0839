#include "deepclass/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "deepclass/errors.hpp"

namespace deepclass {

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (const auto& row : cells_)
        for (std::uint64_t v : row) t += v;
    return t;
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < kClassCount; ++i) t += cells_[i][i];
    return t;
}

std::uint64_t ConfusionMatrix::row_sum(ClassLabel truth) const {
    std::uint64_t t = 0;
    for (std::uint64_t v : cells_[index_of(truth)]) t += v;
    return t;
}

std::uint64_t ConfusionMatrix::column_sum(ClassLabel pred) const {
    std::uint64_t t = 0;
    for (const auto& row : cells_) t += row[index_of(pred)];
    return t;
}

ConfusionMatrix confusion_matrix(std::span<const ClassLabel> truths, std::span<const ClassLabel> preds) {
    if (truths.size() != preds.size())
        throw ArgumentError("confusion_matrix: " + std::to_string(truths.size()) + " truths vs " +
                            std::to_string(preds.size()) + " predictions");
    if (truths.empty()) throw ArgumentError("confusion_matrix needs at least one sample");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truths.size(); ++i) ++cm.cell(truths[i], preds[i]);
    return cm;
}

BinaryCounts one_vs_rest(const ConfusionMatrix& cm, ClassLabel c) {
    BinaryCounts b;
    b.tp = cm.cell(c, c);
    b.fn = cm.row_sum(c) - b.tp;
    b.fp = cm.column_sum(c) - b.tp;
    b.tn = cm.total() - b.tp - b.fp - b.fn;
    return b;
}

int render_percent(double ratio) { return static_cast<int>(std::round(ratio * 100.0)); }

std::array<int, 5> ClassMetrics::rendered() const {
    return {render_percent(accuracy), render_percent(f_measure), render_percent(precision), render_percent(recall),
            render_percent(specificity)};
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ClassMetrics class_metrics(const BinaryCounts& b) {
    if (b.total() == 0) throw ArgumentError("class_metrics: all counts are zero");
    ClassMetrics m;
    m.accuracy = ratio(b.tp + b.tn, b.total());
    m.precision = ratio(b.tp, b.tp + b.fp);
    m.recall = ratio(b.tp, b.tp + b.fn);
    m.specificity = ratio(b.tn, b.tn + b.fp);
    // Harmonic mean of precision and recall, in its exact rational form 2TP / (2TP + FP + FN).
    m.f_measure = ratio(2 * b.tp, 2 * b.tp + b.fp + b.fn);
    return m;
}

std::vector<ClassRow> per_class_rows(const ConfusionMatrix& cm) {
    std::vector<ClassRow> rows;
    for (ClassLabel c : kAllClasses) {
        BinaryCounts b = one_vs_rest(cm, c);
        rows.push_back({c, b, class_metrics(b)});
    }
    return rows;
}

namespace {

constexpr int kWidths[10] = {-8, 7, 7, 7, 7, 6, 8, 6, 11, 6};

void cell(std::ostringstream& os, int width, const std::string& text) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%*s", width, text.c_str());
    os << buf;
}

}  // namespace

std::string render_table(std::span<const ClassRow> rows) {
    std::ostringstream os;
    for (std::size_t i = 0; i < kReportColumns.size(); ++i) cell(os, kWidths[i], kReportColumns[i]);
    os << '\n';
    for (const ClassRow& r : rows) {
        auto pct = r.metrics.rendered();
        cell(os, kWidths[0], std::string(class_name(r.label)));
        cell(os, kWidths[1], std::to_string(r.counts.tp));
        cell(os, kWidths[2], std::to_string(r.counts.fp));
        cell(os, kWidths[3], std::to_string(r.counts.tn));
        cell(os, kWidths[4], std::to_string(r.counts.fn));
        for (std::size_t k = 0; k < 5; ++k) cell(os, kWidths[5 + k], std::to_string(pct[k]));
        os << '\n';
    }
    return os.str();
}

std::string render_report(const ConfusionMatrix& cm, std::span<const ClassRow> rows) {
    std::ostringstream os;
    os << render_table(rows);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", ratio(cm.trace(), cm.total()));
    os << "\nsamples: " << cm.total() << "\naccuracy: " << buf << "\n\nconfusion matrix (rows: true, columns: predicted)\n";
    cell(os, -8, "");
    for (ClassLabel p : kAllClasses) cell(os, 7, std::string(class_name(p)));
    os << '\n';
    for (ClassLabel t : kAllClasses) {
        cell(os, -8, std::string(class_name(t)));
        for (ClassLabel p : kAllClasses) cell(os, 7, std::to_string(cm.cell(t, p)));
        os << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------

std::span<const PublishedRow> published_table() {
    static const PublishedRow rows[] = {
        {ClassLabel::AK, {11, 89, 1850, 55}, {93, 13, 11, 17, 95}},
        {ClassLabel::BCC, {54, 110, 1792, 49}, {92, 40, 33, 52, 94}},
        {ClassLabel::D, {2, 27, 1955, 21}, {98, 8, 7, 9, 99}},
        {ClassLabel::M, {105, 240, 1542, 118}, {82, 37, 30, 47, 87}},
        {ClassLabel::N, {930, 101, 563, 411}, {74, 78, 90, 69, 85}},
        {ClassLabel::PBK, {94, 214, 1571, 126}, {83, 36, 31, 43, 88}},
        {ClassLabel::VL, {4, 24, 1952, 25}, {98, 14, 14, 14, 99}},
    };
    return rows;
}

std::size_t TableCheck::passed() const {
    std::size_t n = 0;
    for (const CellCheck& c : cells) n += c.pass;
    return n;
}

std::string TableCheck::render() const {
    std::ostringstream os;
    for (const CellCheck& c : cells) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-4s %-11s published %3d recomputed %3d  %s\n",
                      std::string(class_name(c.label)).c_str(), c.metric, c.published, c.recomputed,
                      c.pass ? "PASS" : "FAIL");
        os << buf;
    }
    os << passed() << "/" << cells.size() << (all_pass() ? " PASS" : " FAIL") << '\n';
    return os.str();
}

TableCheck verify_table(std::span<const PublishedRow> rows) {
    TableCheck check;
    for (const PublishedRow& r : rows) {
        std::array<int, 5> got{};
        if (r.counts.total() > 0) got = class_metrics(r.counts).rendered();
        for (std::size_t k = 0; k < 5; ++k)
            check.cells.push_back({r.label, kMetricNames[k], r.percents[k], got[k],
                                   r.counts.total() > 0 && got[k] == r.percents[k]});
    }
    return check;
}

std::vector<PublishedRow> parse_fixture_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    std::vector<PublishedRow> rows;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line != "class,tp,fp,tn,fn,acc,f,pre,rec,spe")
                throw ParseError("expected fixture header 'class,tp,fp,tn,fn,acc,f,pre,rec,spe'", line_no);
            continue;
        }
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string name;
        std::getline(fields, name, ',');
        auto label = class_from_name(name);
        if (!label) throw ParseError("unknown class '" + name + "'", line_no);
        PublishedRow r;
        r.label = *label;
        long long v[9];
        for (long long& x : v) {
            std::string f;
            if (!std::getline(fields, f, ','))
                throw ParseError("expected 10 comma-separated fields", line_no);
            try {
                std::size_t used = 0;
                x = std::stoll(f, &used);
                if (used != f.size() || x < 0) throw std::invalid_argument(f);
            } catch (const std::exception&) {
                throw ParseError("field '" + f + "' is not a non-negative integer", line_no);
            }
        }
        r.counts = {static_cast<std::uint64_t>(v[0]), static_cast<std::uint64_t>(v[1]),
                    static_cast<std::uint64_t>(v[2]), static_cast<std::uint64_t>(v[3])};
        for (std::size_t k = 0; k < 5; ++k) r.percents[k] = static_cast<int>(v[4 + k]);
        rows.push_back(r);
    }
    if (line_no == 0) throw ParseError("empty fixture", 1);
    return rows;
}

}  // namespace deepclass
