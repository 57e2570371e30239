#pragma once

// CSV, summary-text and SVG emitters for evaluation reports: the per-mask
// metric table (Table-1 column order), group means, the QI scatter data and
// plots, the Seg.DSC histogram, and error-map slice previews.

#include <string>
#include <vector>

#include "voxqa/errormap.hpp"
#include "voxqa/pipeline.hpp"

namespace voxqa {

// columns: MaskType,DSC,Acc,Prec,Recl,SegDSC,SegAcc
void write_records_csv(const EvalReport& report, const std::string& path);
void write_groups_csv(const EvalReport& report, const std::string& path);

// columns: scan,source,head_code,QI,Acc,DSC
void write_scatter_csv(const QiCorrelation& corr, const std::string& path);
std::vector<ScatterRow> read_scatter_csv(const std::string& path);

// PCC/MAE lines (machine-parseable) followed by the group table
void write_summary(const EvalReport& report, const QiCorrelation& corr,
                   const std::string& path);

void write_loss_csv(const TrainLog& log, const std::string& path);

// one circle marker per point, colored by head code
void write_scatter_svg(const std::vector<ScatterRow>& rows, bool against_dsc,
                       const std::string& path);

// Seg.DSC histogram over auto-generated masks
void write_dsc_histogram_svg(const std::vector<ScatterRow>& rows, std::size_t bins,
                             const std::string& path);

// Central-slice preview of an error map. reversed=true renders the reversed
// display convention (0 = error, 1 = correct); storage always keeps 1=error.
void write_error_map_preview_svg(const ErrorMap& em, bool reversed, const std::string& path);

} // namespace voxqa
