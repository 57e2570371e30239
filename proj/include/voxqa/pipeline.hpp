#pragma once

// Orchestration: segmentor training (CE + multiclass Dice over all five
// heads), mask harvesting from both segmentors' heads, predictor training
// with on-the-fly masks against true error maps, per-mask-type evaluation
// and the QI correlation analysis.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "voxqa/datagen.hpp"
#include "voxqa/errormap.hpp"
#include "voxqa/metrics.hpp"
#include "voxqa/models.hpp"
#include "voxqa/volume.hpp"

namespace voxqa {

// One preprocessed case.
struct Scan {
    std::string id;
    VoxelGrid image;
    LabelMask gt;
};

enum class MaskSource { Seg3D, Seg2D, GroundTruth };
const char* source_name(MaskSource s);

// Table-style mask type label: "3D-Final", "3D-2".."3D-5", "2D-...", "GT".
std::string mask_type_name(MaskSource source, HeadId head);

struct MaskRecord {
    std::string scan_id;
    MaskSource source = MaskSource::Seg3D;
    HeadId head = HeadId::Final;
    LabelMask mask;
};

struct PreprocessConfig {
    double target_spacing = 2.0;
    std::size_t roi_margin = 8;
};

Scan preprocess(std::string id, const VoxelGrid& image, const LabelMask& gt,
                const PreprocessConfig& cfg);

struct TrainConfig {
    std::size_t epochs = 6;
    std::size_t steps_per_epoch = 40;
    std::size_t batch_size = 1;
    float learning_rate = 1e-3f;
    std::string optimizer = "adam"; // or "sgd"
    std::uint64_t seed = 0;
    AugmentConfig augment;
    float ce_weight = 1.0f;
    float dice_weight = 1.0f;
    bool include_gt_masks = false; // predictor: sample GT masks during training
};

struct TrainLog {
    std::vector<double> epoch_mean_loss;
    std::vector<std::string> sampled_scan_ids; // split-hygiene audit trail
};

// Trains a fresh segmentor (rank 2 trains on axial slices of the same
// volumes). Aborts with DivergenceError on a non-finite loss.
SegNet train_segmentor(const std::vector<Scan>& train_set, const NetConfig& net_cfg,
                       const TrainConfig& cfg, int rank, TrainLog* log = nullptr);

// Exactly 10 records per scan: {Seg3D, Seg2D} x {Side2..Side5, Final},
// masks are per-head argmax; the 2D model runs slice-wise along the first
// spatial axis and is restacked.
std::vector<MaskRecord> generate_masks(SegNet& seg3d, SegNet& seg2d,
                                       const std::vector<Scan>& scans);

// Appends one GroundTruth record per scan.
void append_gt_records(std::vector<MaskRecord>& records, const std::vector<Scan>& scans);

// Trains the error-map predictor. Segmentor parameters stay bitwise frozen;
// each step samples a scan and one of the 10 (model, head) combinations
// uniformly, generates that mask on the fly (memoized) and regresses the
// true error map of the augmented pair.
SegNet train_predictor(SegNet& seg3d, SegNet& seg2d, const std::vector<Scan>& train_set,
                       const NetConfig& net_cfg, const TrainConfig& cfg,
                       TrainLog* log = nullptr);

struct Prediction {
    SoftErrorMap soft;
    ErrorMap binary;
    double qi = 0;
};

Prediction predict_error_map(SegNet& predictor, const VoxelGrid& image, const LabelMask& mask,
                             double tau);

// The evaluation path is generic over where the soft maps come from, so the
// oracle (true error maps) can flow through the identical code.
using SoftMapFn = std::function<SoftErrorMap(const Scan& scan, const LabelMask& mask)>;
SoftMapFn model_soft_maps(SegNet& predictor);
SoftMapFn oracle_soft_maps(); // bits of true_error_map(mask, scan.gt) as probabilities

struct EvalRow {
    std::string scan_id;
    MaskSource source = MaskSource::Seg3D;
    HeadId head = HeadId::Final;
    double dsc = 0, acc = 0, prec = 0, recl = 0; // predicted vs true error map
    double seg_dsc = 0, seg_acc = 0;             // mask vs gt
    double qi = 0;
};

struct GroupRow {
    std::string mask_type;
    std::size_t n = 0;
    double dsc = 0, acc = 0, prec = 0, recl = 0, seg_dsc = 0, seg_acc = 0;
};

struct ScatterRow {
    std::string scan_id;
    std::string source;
    int head_code = 0; // 0 GT, -1 final, -2..-5 side outputs
    double qi = 0, acc = 0, dsc = 0;
};

struct QiCorrelation {
    double pcc_qi_acc = 0, pcc_qi_dsc = 0, mae_qi_acc = 0;
    std::vector<ScatterRow> scatter;
};

struct EvalReport {
    std::vector<EvalRow> rows;     // ordered by (scan, source, head)
    std::vector<GroupRow> groups;  // per type, 3D/2D averages, overall rows
    std::optional<QiCorrelation> corr;
};

EvalReport evaluate(const SoftMapFn& soft_maps, const std::vector<MaskRecord>& records,
                    const std::vector<Scan>& scans, double tau);

// PCC(QI, Seg.Acc), PCC(QI, Seg.DSC), MAE(QI, Seg.Acc) over all rows plus
// the scatter table.
QiCorrelation correlate_qi(const EvalReport& report);

struct ExperimentConfig {
    NetConfig seg_net;       // in/out channels filled per model
    std::size_t k = 2;
    std::uint64_t master_seed = 1;
    double tau = 0.5;
    PreprocessConfig prep;
    TrainConfig seg3d_train;
    TrainConfig seg2d_train;
    TrainConfig pred_train;
};

// Desk-scale defaults sized for this artifact's phantom experiments.
ExperimentConfig default_experiment();

struct FoldModels {
    SegNet seg3d, seg2d, predictor;
    TrainLog seg3d_log, seg2d_log, pred_log;
};

// Trains the three models of one fold with the same seed derivation the
// cross-validation driver uses, so train/eval commands reproduce crossval
// folds bit-for-bit.
FoldModels train_fold_models(const std::vector<Scan>& train_scans, const ExperimentConfig& cfg,
                             std::size_t fold_index);

// The kfold seed tag; split = kfold_split(ids, k, derive_seed(master, kSplitTag)).
inline constexpr std::uint64_t kSplitTag = 0xF01D;

struct FoldOutput {
    FoldSplit split;
    SegNet seg3d, seg2d, predictor;
    TrainLog seg3d_log, seg2d_log, pred_log;
    std::vector<MaskRecord> test_records;
    EvalReport report;
};

struct CrossValOutput {
    std::vector<FoldOutput> folds;
    EvalReport pooled;
};

// Full protocol: per fold, train all three models on the train split only,
// evaluate on the test split only, then pool rows across folds. `jobs`
// folds run concurrently; results are identical for any jobs value.
CrossValOutput run_cross_validation(const std::vector<Scan>& dataset,
                                    const ExperimentConfig& cfg, std::size_t jobs = 1);

// Deterministic sub-seed derivation (splitmix64 mix of master and tag).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag);

} // namespace voxqa
