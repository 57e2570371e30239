#include "voxqa/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace voxqa {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path + ": cannot open for writing");
    return out;
}

// head code -> plot color, GT black, final red, sides blue family
const char* code_color(int code) {
    switch (code) {
        case 0: return "#000000";
        case -1: return "#d62728";
        case -2: return "#1f77b4";
        case -3: return "#2ca02c";
        case -4: return "#9467bd";
        case -5: return "#ff7f0e";
    }
    return "#7f7f7f";
}

} // namespace

void write_records_csv(const EvalReport& report, const std::string& path) {
    auto out = open_out(path);
    out << "MaskType,DSC,Acc,Prec,Recl,SegDSC,SegAcc\n";
    for (const auto& r : report.rows)
        out << mask_type_name(r.source, r.head) << "," << fmt(r.dsc) << "," << fmt(r.acc)
            << "," << fmt(r.prec) << "," << fmt(r.recl) << "," << fmt(r.seg_dsc) << ","
            << fmt(r.seg_acc) << "\n";
    if (!out) throw IoError(path + ": write failed");
}

void write_groups_csv(const EvalReport& report, const std::string& path) {
    auto out = open_out(path);
    out << "MaskType,DSC,Acc,Prec,Recl,SegDSC,SegAcc\n";
    for (const auto& g : report.groups)
        out << g.mask_type << "," << fmt(g.dsc) << "," << fmt(g.acc) << "," << fmt(g.prec)
            << "," << fmt(g.recl) << "," << fmt(g.seg_dsc) << "," << fmt(g.seg_acc) << "\n";
    if (!out) throw IoError(path + ": write failed");
}

void write_scatter_csv(const QiCorrelation& corr, const std::string& path) {
    auto out = open_out(path);
    out << "scan,source,head_code,QI,Acc,DSC\n";
    for (const auto& r : corr.scatter)
        out << r.scan_id << "," << r.source << "," << r.head_code << "," << fmt(r.qi) << ","
            << fmt(r.acc) << "," << fmt(r.dsc) << "\n";
    if (!out) throw IoError(path + ": write failed");
}

std::vector<ScatterRow> read_scatter_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path + ": cannot open");
    std::string line;
    if (!std::getline(in, line) || line.rfind("scan,", 0) != 0)
        throw IoError(path + ": not a scatter csv");
    std::vector<ScatterRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        ScatterRow r;
        std::string field;
        try {
            if (!std::getline(ls, r.scan_id, ',')) throw ValueError("scan");
            if (!std::getline(ls, r.source, ',')) throw ValueError("source");
            if (!std::getline(ls, field, ',')) throw ValueError("head_code");
            r.head_code = std::stoi(field);
            if (!std::getline(ls, field, ',')) throw ValueError("QI");
            r.qi = std::stod(field);
            if (!std::getline(ls, field, ',')) throw ValueError("Acc");
            r.acc = std::stod(field);
            if (!std::getline(ls, field)) throw ValueError("DSC");
            r.dsc = std::stod(field);
        } catch (const std::exception&) {
            throw IoError(path + ": malformed scatter row: " + line);
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_summary(const EvalReport& report, const QiCorrelation& corr,
                   const std::string& path) {
    auto out = open_out(path);
    out << "masks = " << report.rows.size() << "\n";
    out << "PCC_QI_Acc = " << fmt(corr.pcc_qi_acc) << "\n";
    out << "PCC_QI_DSC = " << fmt(corr.pcc_qi_dsc) << "\n";
    out << "MAE_QI_Acc = " << fmt(corr.mae_qi_acc) << "\n";
    out << "\nMaskType           n    DSC      Acc      Prec     Recl     SegDSC   SegAcc\n";
    for (const auto& g : report.groups) {
        char buf[200];
        std::snprintf(buf, sizeof(buf), "%-16s %4zu  %.4f   %.4f   %.4f   %.4f   %.4f   %.4f\n",
                      g.mask_type.c_str(), g.n, g.dsc, g.acc, g.prec, g.recl, g.seg_dsc,
                      g.seg_acc);
        out << buf;
    }
    if (!out) throw IoError(path + ": write failed");
}

void write_loss_csv(const TrainLog& log, const std::string& path) {
    auto out = open_out(path);
    out << "epoch,mean_loss\n";
    for (std::size_t e = 0; e < log.epoch_mean_loss.size(); ++e)
        out << e << "," << fmt(log.epoch_mean_loss[e]) << "\n";
    if (!out) throw IoError(path + ": write failed");
}

namespace {

// minimal scatter plot: fixed viewport, unit-square axes
void scatter_svg(const std::vector<ScatterRow>& rows, bool against_dsc, std::ostream& out) {
    const int W = 480, H = 480, M = 50;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    out << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H
        << "\" fill=\"white\"/>\n";
    // axes
    out << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << W - M << "\" y2=\""
        << H - M << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << M << "\" y2=\"" << M
        << "\" stroke=\"black\"/>\n";
    const char* ylab = against_dsc ? "Real DSC" : "Real Acc";
    out << "<text x=\"" << W / 2 << "\" y=\"" << H - 12
        << "\" text-anchor=\"middle\" font-size=\"14\">QI</text>\n";
    out << "<text x=\"16\" y=\"" << H / 2 << "\" text-anchor=\"middle\" font-size=\"14\" "
        << "transform=\"rotate(-90 16 " << H / 2 << ")\">" << ylab << "</text>\n";
    for (int t = 0; t <= 4; ++t) {
        const double v = t / 4.0;
        const int x = M + static_cast<int>(v * (W - 2 * M));
        const int y = H - M - static_cast<int>(v * (H - 2 * M));
        char buf[120];
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\" font-size=\"10\">"
                      "%.2f</text>\n",
                      x, H - M + 14, v);
        out << buf;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%d\" text-anchor=\"end\" font-size=\"10\">"
                      "%.2f</text>\n",
                      M - 4, y + 3, v);
        out << buf;
    }
    for (const auto& r : rows) {
        const double yval = against_dsc ? r.dsc : r.acc;
        const double cx = M + r.qi * (W - 2 * M);
        const double cy = H - M - yval * (H - 2 * M);
        char buf[200];
        std::snprintf(buf, sizeof(buf),
                      "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"3\" fill=\"%s\" "
                      "fill-opacity=\"0.75\"/>\n",
                      cx, cy, code_color(r.head_code));
        out << buf;
    }
    out << "</svg>\n";
}

} // namespace

void write_scatter_svg(const std::vector<ScatterRow>& rows, bool against_dsc,
                       const std::string& path) {
    auto out = open_out(path);
    scatter_svg(rows, against_dsc, out);
    if (!out) throw IoError(path + ": write failed");
}

void write_dsc_histogram_svg(const std::vector<ScatterRow>& rows, std::size_t bins,
                             const std::string& path) {
    if (bins == 0) throw ValueError("histogram: bins must be positive");
    std::vector<double> edges(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) edges[i] = static_cast<double>(i) / bins;
    std::vector<double> values;
    for (const auto& r : rows)
        if (r.head_code != 0) values.push_back(r.dsc); // auto-generated masks only
    const auto counts = histogram(values, edges);
    const std::uint64_t peak = std::max<std::uint64_t>(
        1, *std::max_element(counts.begin(), counts.end()));

    const int W = 480, H = 320, M = 40;
    auto out = open_out(path);
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    out << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H
        << "\" fill=\"white\"/>\n";
    out << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << W - M << "\" y2=\""
        << H - M << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"" << H - 8
        << "\" text-anchor=\"middle\" font-size=\"13\">DSC of generated masks</text>\n";
    const double bw = static_cast<double>(W - 2 * M) / bins;
    for (std::size_t b = 0; b < bins; ++b) {
        const double h = (H - 2 * M) * static_cast<double>(counts[b]) / peak;
        char buf[200];
        std::snprintf(buf, sizeof(buf),
                      "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" "
                      "fill=\"#1f77b4\" stroke=\"white\"/>\n",
                      M + b * bw, H - M - h, bw, h);
        out << buf;
    }
    out << "</svg>\n";
    if (!out) throw IoError(path + ": write failed");
}

void write_error_map_preview_svg(const ErrorMap& em, bool reversed, const std::string& path) {
    const std::size_t z = em.dims.d / 2; // central slice
    const int cell = 8;
    const int W = static_cast<int>(em.dims.w) * cell;
    const int H = static_cast<int>(em.dims.h) * cell;
    auto out = open_out(path);
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    for (std::size_t y = 0; y < em.dims.h; ++y)
        for (std::size_t x = 0; x < em.dims.w; ++x) {
            const bool err = em.bits[(z * em.dims.h + y) * em.dims.w + x] != 0;
            // storage: 1 = error; reversed display shows errors dark
            const bool bright = reversed ? !err : err;
            char buf[160];
            std::snprintf(buf, sizeof(buf),
                          "<rect x=\"%zu\" y=\"%zu\" width=\"%d\" height=\"%d\" "
                          "fill=\"%s\"/>\n",
                          x * cell, y * cell, cell, cell, bright ? "#ffffff" : "#000000");
            out << buf;
        }
    out << "</svg>\n";
    if (!out) throw IoError(path + ": write failed");
}

} // namespace voxqa
