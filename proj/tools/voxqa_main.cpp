// voxqa command line: phantom dataset generation, per-fold training,
// evaluation with CSV/SVG reports, k-fold cross validation, and report
// regeneration from scatter data.
//
// Exit codes: 0 success, 2 usage, 3 IO, 4 training divergence, 1 other.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "voxqa/checkpoint.hpp"
#include "voxqa/pipeline.hpp"
#include "voxqa/reporting.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace voxqa;

namespace {

constexpr const char* kVersion = "0.1.0";

struct RawEntry {
    std::string id, image_path, gt_path;
};

std::vector<RawEntry> load_dataset_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path + ": cannot open dataset manifest");
    const fs::path base = fs::path(path).parent_path();
    std::vector<RawEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        RawEntry e;
        if (!(ls >> e.id >> e.image_path >> e.gt_path))
            throw IoError(path + ": malformed manifest line: " + line);
        if (fs::path(e.image_path).is_relative())
            e.image_path = (base / e.image_path).string();
        if (fs::path(e.gt_path).is_relative()) e.gt_path = (base / e.gt_path).string();
        entries.push_back(std::move(e));
    }
    if (entries.empty()) throw IoError(path + ": dataset manifest lists no scans");
    return entries;
}

std::vector<Scan> load_and_preprocess(const std::string& manifest, const PreprocessConfig& prep) {
    std::vector<Scan> scans;
    for (const auto& e : load_dataset_manifest(manifest))
        scans.push_back(preprocess(e.id, load_image(e.image_path), load_labels(e.gt_path), prep));
    return scans;
}

json train_config_json(const TrainConfig& t) {
    return json{{"epochs", t.epochs},
                {"steps_per_epoch", t.steps_per_epoch},
                {"batch_size", t.batch_size},
                {"learning_rate", t.learning_rate},
                {"optimizer", t.optimizer},
                {"ce_weight", t.ce_weight},
                {"dice_weight", t.dice_weight},
                {"include_gt_masks", t.include_gt_masks},
                {"patch3d", {t.augment.patch3d.d, t.augment.patch3d.h, t.augment.patch3d.w}},
                {"patch2d", {t.augment.patch2d.h, t.augment.patch2d.w}},
                {"flips", t.augment.flips},
                {"scale", {t.augment.scale_lo, t.augment.scale_hi}}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig t;
    t.epochs = j.at("epochs");
    t.steps_per_epoch = j.at("steps_per_epoch");
    t.batch_size = j.at("batch_size");
    t.learning_rate = j.at("learning_rate");
    t.optimizer = j.at("optimizer");
    t.ce_weight = j.at("ce_weight");
    t.dice_weight = j.at("dice_weight");
    t.include_gt_masks = j.at("include_gt_masks");
    const auto& p3 = j.at("patch3d");
    t.augment.patch3d = {p3.at(0), p3.at(1), p3.at(2)};
    const auto& p2 = j.at("patch2d");
    t.augment.patch2d = {1, p2.at(0), p2.at(1)};
    t.augment.flips = j.at("flips");
    t.augment.scale_lo = j.at("scale").at(0);
    t.augment.scale_hi = j.at("scale").at(1);
    return t;
}

json experiment_json(const ExperimentConfig& cfg) {
    return json{{"k", cfg.k},
                {"seed", cfg.master_seed},
                {"tau", cfg.tau},
                {"prep",
                 {{"target_spacing", cfg.prep.target_spacing},
                  {"roi_margin", cfg.prep.roi_margin}}},
                {"net",
                 {{"base_channels", cfg.seg_net.base_channels},
                  {"blocks_per_stage", cfg.seg_net.blocks_per_stage}}},
                {"train_seg3d", train_config_json(cfg.seg3d_train)},
                {"train_seg2d", train_config_json(cfg.seg2d_train)},
                {"train_pred", train_config_json(cfg.pred_train)}};
}

ExperimentConfig experiment_from_json(const json& j) {
    ExperimentConfig cfg;
    cfg.k = j.at("k");
    cfg.master_seed = j.at("seed");
    cfg.tau = j.at("tau");
    cfg.prep.target_spacing = j.at("prep").at("target_spacing");
    cfg.prep.roi_margin = j.at("prep").at("roi_margin");
    cfg.seg_net.base_channels = j.at("net").at("base_channels");
    cfg.seg_net.blocks_per_stage = j.at("net").at("blocks_per_stage");
    cfg.seg3d_train = train_config_from_json(j.at("train_seg3d"));
    cfg.seg2d_train = train_config_from_json(j.at("train_seg2d"));
    cfg.pred_train = train_config_from_json(j.at("train_pred"));
    return cfg;
}

void write_run_manifest(const fs::path& dir, json j, int argc, char** argv) {
    j["artifact_version"] = kVersion;
    json args = json::array();
    for (int i = 0; i < argc; ++i) args.push_back(argv[i]);
    j["argv"] = args;
    std::ofstream out(dir / "run_manifest.json", std::ios::trunc);
    if (!out) throw IoError((dir / "run_manifest.json").string() + ": cannot write");
    out << j.dump(2) << "\n";
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError(dir + ": cannot create output directory (" + ec.message() + ")");
}

// shared CLI knobs that override the desk-scale defaults
struct TrainKnobs {
    std::size_t epochs = 0, pred_epochs = 0, steps = 0, batch = 0, patch = 0;
    double lr = 0;
    std::string optimizer;

    void apply(ExperimentConfig& cfg) const {
        auto patch_all = [&](TrainConfig& t, bool is2d) {
            if (epochs) t.epochs = epochs;
            if (steps) t.steps_per_epoch = steps;
            if (batch) t.batch_size = batch;
            if (lr > 0) t.learning_rate = static_cast<float>(lr);
            if (!optimizer.empty()) t.optimizer = optimizer;
            if (patch) {
                if (is2d)
                    t.augment.patch2d = {1, patch, patch};
                else
                    t.augment.patch3d = {patch, patch, patch};
                t.augment.patch2d = {1, patch, patch};
            }
        };
        patch_all(cfg.seg3d_train, false);
        patch_all(cfg.seg2d_train, true);
        patch_all(cfg.pred_train, false);
        if (pred_epochs) cfg.pred_train.epochs = pred_epochs;
    }
};

void add_train_knobs(CLI::App* cmd, TrainKnobs& knobs) {
    cmd->add_option("--epochs", knobs.epochs, "Training epochs for the segmentors");
    cmd->add_option("--pred-epochs", knobs.pred_epochs, "Training epochs for the predictor");
    cmd->add_option("--steps", knobs.steps, "Steps per epoch");
    cmd->add_option("--batch", knobs.batch, "Patches per step");
    cmd->add_option("--patch", knobs.patch, "Cubic patch size (3D) / square (2D)");
    cmd->add_option("--lr", knobs.lr, "Learning rate");
    cmd->add_option("--optimizer", knobs.optimizer, "adam or sgd");
}

void save_fold_models(const fs::path& dir, const FoldModels& models) {
    save_checkpoint(models.seg3d.params(), (dir / "seg3d.ckpt").string());
    save_checkpoint(models.seg2d.params(), (dir / "seg2d.ckpt").string());
    save_checkpoint(models.predictor.params(), (dir / "predictor.ckpt").string());
    write_loss_csv(models.seg3d_log, (dir / "loss_seg3d.csv").string());
    write_loss_csv(models.seg2d_log, (dir / "loss_seg2d.csv").string());
    write_loss_csv(models.pred_log, (dir / "loss_predictor.csv").string());
}

void write_eval_outputs(const fs::path& dir, const EvalReport& report,
                        const QiCorrelation& corr, const std::string& prefix = "") {
    write_records_csv(report, (dir / (prefix + "metrics.csv")).string());
    write_groups_csv(report, (dir / (prefix + "groups.csv")).string());
    write_scatter_csv(corr, (dir / (prefix + "scatter.csv")).string());
    write_summary(report, corr, (dir / (prefix + "summary.txt")).string());
    write_scatter_svg(corr.scatter, false, (dir / (prefix + "scatter_qi_acc.svg")).string());
    write_scatter_svg(corr.scatter, true, (dir / (prefix + "scatter_qi_dsc.svg")).string());
    write_dsc_histogram_svg(corr.scatter, 20, (dir / (prefix + "hist_dsc.svg")).string());
}

// rebuild the three models of a fold from a train run manifest + checkpoints
struct LoadedFold {
    ExperimentConfig cfg;
    std::string dataset_manifest;
    std::size_t fold = 0;
    int classes = 0;
    SegNet seg3d, seg2d, predictor;
};

LoadedFold load_fold(const fs::path& ckpt_dir) {
    const fs::path mpath = ckpt_dir / "run_manifest.json";
    std::ifstream in(mpath);
    if (!in) throw IoError(mpath.string() + ": cannot open (expected a train output dir)");
    json j;
    in >> j;
    ExperimentConfig cfg = experiment_from_json(j.at("experiment"));
    const int classes = j.at("classes");
    const std::size_t fold = j.at("fold");

    NetConfig net3 = cfg.seg_net;
    net3.rank = 3;
    net3.in_channels = 1;
    net3.out_classes = static_cast<std::size_t>(classes) + 1;
    NetConfig net2 = net3;
    net2.rank = 2;
    NetConfig netp = cfg.seg_net;
    netp.rank = 3;
    netp.in_channels = 1 + static_cast<std::size_t>(classes) + 1;
    netp.out_classes = 2;

    LoadedFold out{cfg,
                   j.at("dataset_manifest"),
                   fold,
                   classes,
                   build_segmentor(net3, 0),
                   build_segmentor(net2, 0),
                   build_predictor(netp, 0)};
    load_checkpoint(out.seg3d.params(), (ckpt_dir / "seg3d.ckpt").string());
    load_checkpoint(out.seg2d.params(), (ckpt_dir / "seg2d.ckpt").string());
    load_checkpoint(out.predictor.params(), (ckpt_dir / "predictor.ckpt").string());
    return out;
}

std::vector<Scan> select_scans(const std::vector<Scan>& all, const std::vector<std::string>& ids) {
    std::vector<Scan> out;
    for (const auto& id : ids) {
        const auto it = std::find_if(all.begin(), all.end(),
                                     [&](const Scan& s) { return s.id == id; });
        if (it == all.end()) throw ValueError("scan " + id + " missing from dataset manifest");
        out.push_back(*it);
    }
    return out;
}

int dataset_classes(const std::vector<Scan>& scans) {
    const int c = scans.at(0).gt.num_classes;
    for (const auto& s : scans)
        if (s.gt.num_classes != c)
            throw ValueError("dataset mixes class counts (" + std::to_string(c) + " vs " +
                             std::to_string(s.gt.num_classes) + ")");
    return c;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"voxqa: segmentation error-map prediction and quality assessment"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    // ---- phantom ----
    auto* phantom = app.add_subcommand("phantom", "Generate a phantom dataset");
    struct {
        std::size_t n = 20, dims = 32;
        int classes = 3;
        double noise = 0.05, bias = 0.10, spacing = 2.0;
        std::uint64_t seed = 1;
        std::string out;
    } ph;
    phantom->add_option("--n", ph.n, "Number of scans");
    phantom->add_option("--dims", ph.dims, "Cubic volume size (voxels, >= 16)");
    phantom->add_option("--classes", ph.classes, "Foreground classes C");
    phantom->add_option("--noise", ph.noise, "Gaussian noise sigma");
    phantom->add_option("--bias", ph.bias, "Bias field amplitude");
    phantom->add_option("--spacing", ph.spacing, "Voxel spacing in mm");
    phantom->add_option("--seed", ph.seed, "Generation seed");
    phantom->add_option("--out", ph.out, "Output directory")->required();

    // ---- train ----
    auto* train = app.add_subcommand("train", "Train seg3d, seg2d and predictor on one fold");
    struct {
        std::string manifest, out;
        std::size_t fold = 0, k = 2;
        std::uint64_t seed = 1;
        double spacing = 2.0;
        std::size_t margin = 8;
        TrainKnobs knobs;
    } tr;
    train->add_option("--manifest", tr.manifest, "Dataset manifest")->required();
    train->add_option("--fold", tr.fold, "Fold index in [0,k)");
    train->add_option("--k", tr.k, "Number of folds");
    train->add_option("--seed", tr.seed, "Master seed");
    train->add_option("--spacing", tr.spacing, "Resample target spacing (mm)");
    train->add_option("--margin", tr.margin, "ROI margin (voxels)");
    add_train_knobs(train, tr.knobs);
    train->add_option("--out", tr.out, "Output directory")->required();

    // ---- eval ----
    auto* eval = app.add_subcommand("eval", "Evaluate trained checkpoints on their test fold");
    struct {
        std::string checkpoints, manifest, out;
        double tau = 0.5;
        bool preview = false, reversed_preview = false;
    } ev;
    eval->add_option("--checkpoints", ev.checkpoints, "Train output directory")->required();
    eval->add_option("--manifest", ev.manifest, "Dataset manifest (default: the trained one)");
    eval->add_option("--tau", ev.tau, "Error-probability threshold in (0,1)");
    eval->add_flag("--preview", ev.preview, "Also write an error-map slice preview SVG");
    eval->add_flag("--reversed-preview", ev.reversed_preview,
                   "Preview with reversed intensity (0 = error)");
    eval->add_option("--out", ev.out, "Output directory")->required();

    // ---- crossval ----
    auto* crossval = app.add_subcommand("crossval", "k-fold cross validation end to end");
    struct {
        std::string manifest, out;
        std::size_t k = 2, jobs = 1;
        std::uint64_t seed = 1;
        double tau = 0.5, spacing = 2.0;
        std::size_t margin = 8;
        TrainKnobs knobs;
    } cv;
    crossval->add_option("--manifest", cv.manifest, "Dataset manifest")->required();
    crossval->add_option("--k", cv.k, "Number of folds");
    crossval->add_option("--seed", cv.seed, "Master seed");
    crossval->add_option("--tau", cv.tau, "Error-probability threshold");
    crossval->add_option("--jobs", cv.jobs, "Folds trained concurrently");
    crossval->add_option("--spacing", cv.spacing, "Resample target spacing (mm)");
    crossval->add_option("--margin", cv.margin, "ROI margin (voxels)");
    add_train_knobs(crossval, cv.knobs);
    crossval->add_option("--out", cv.out, "Output directory")->required();

    // ---- report ----
    auto* report = app.add_subcommand("report", "Regenerate summary and plots from scatter csv");
    struct {
        std::string scatter, out;
        std::size_t bins = 20;
    } rp;
    report->add_option("--scatter", rp.scatter, "scatter.csv from an eval run")->required();
    report->add_option("--bins", rp.bins, "Histogram bin count");
    report->add_option("--out", rp.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 2;
    }

    try {
        if (*phantom) {
            ensure_dir(ph.out);
            const fs::path dir(ph.out);
            std::ofstream manifest(dir / "manifest.tsv", std::ios::trunc);
            if (!manifest) throw IoError((dir / "manifest.tsv").string() + ": cannot write");
            for (std::size_t i = 0; i < ph.n; ++i) {
                PhantomSpec spec;
                spec.dims = {ph.dims, ph.dims, ph.dims};
                spec.num_foreground_classes = ph.classes;
                spec.noise_sigma = ph.noise;
                spec.bias_amplitude = ph.bias;
                spec.spacing = {ph.spacing, ph.spacing, ph.spacing};
                spec.seed = derive_seed(ph.seed, i);
                auto [img, gt] = generate_phantom(spec);
                char id[32];
                std::snprintf(id, sizeof(id), "scan_%03zu", i);
                const std::string img_name = std::string(id) + "_img.vvol";
                const std::string gt_name = std::string(id) + "_gt.vvol";
                save_grid(img, (dir / img_name).string());
                save_grid(gt, (dir / gt_name).string());
                manifest << id << "\t" << img_name << "\t" << gt_name << "\n";
            }
            manifest.close();
            write_run_manifest(dir,
                               json{{"command", "phantom"},
                                    {"n", ph.n},
                                    {"dims", ph.dims},
                                    {"classes", ph.classes},
                                    {"noise", ph.noise},
                                    {"bias", ph.bias},
                                    {"spacing", ph.spacing},
                                    {"seed", ph.seed}},
                               argc, argv);
            std::cout << "wrote " << ph.n << " scans to " << ph.out << "\n";
        } else if (*train) {
            if (tr.fold >= tr.k) throw ValueError("--fold must lie in [0,k)");
            ensure_dir(tr.out);
            const fs::path dir(tr.out);
            ExperimentConfig cfg = default_experiment();
            cfg.k = tr.k;
            cfg.master_seed = tr.seed;
            cfg.prep.target_spacing = tr.spacing;
            cfg.prep.roi_margin = tr.margin;
            tr.knobs.apply(cfg);

            const auto scans = load_and_preprocess(tr.manifest, cfg.prep);
            const int classes = dataset_classes(scans);
            std::vector<std::string> ids;
            for (const auto& s : scans) ids.push_back(s.id);
            const auto folds = kfold_split(ids, cfg.k, derive_seed(cfg.master_seed, kSplitTag));
            const auto train_scans = select_scans(scans, folds[tr.fold].train_ids);

            FoldModels models = train_fold_models(train_scans, cfg, tr.fold);
            save_fold_models(dir, models);
            write_run_manifest(dir,
                               json{{"command", "train"},
                                    {"dataset_manifest", fs::absolute(tr.manifest).string()},
                                    {"fold", tr.fold},
                                    {"classes", classes},
                                    {"experiment", experiment_json(cfg)}},
                               argc, argv);
            std::cout << "fold " << tr.fold << "/" << cfg.k << ": trained 3 models on "
                      << train_scans.size() << " scans -> " << tr.out << "\n";
        } else if (*eval) {
            ensure_dir(ev.out);
            const fs::path dir(ev.out);
            if (!(ev.tau > 0.0 && ev.tau < 1.0))
                throw ValueError("--tau must lie in (0,1)");
            LoadedFold fold = load_fold(ev.checkpoints);
            const std::string manifest =
                ev.manifest.empty() ? fold.dataset_manifest : ev.manifest;
            const auto scans = load_and_preprocess(manifest, fold.cfg.prep);
            std::vector<std::string> ids;
            for (const auto& s : scans) ids.push_back(s.id);
            const auto folds =
                kfold_split(ids, fold.cfg.k, derive_seed(fold.cfg.master_seed, kSplitTag));
            const auto test_scans = select_scans(scans, folds[fold.fold].test_ids);

            auto records = generate_masks(fold.seg3d, fold.seg2d, test_scans);
            append_gt_records(records, test_scans);
            EvalReport rep = evaluate(model_soft_maps(fold.predictor), records, test_scans,
                                      ev.tau);
            const QiCorrelation corr = correlate_qi(rep);
            write_eval_outputs(dir, rep, corr);
            if (ev.preview || ev.reversed_preview) {
                const auto& rec = records.front();
                const auto& scan = *std::find_if(test_scans.begin(), test_scans.end(),
                                                 [&](const Scan& s) {
                                                     return s.id == rec.scan_id;
                                                 });
                auto p = predict_error_map(fold.predictor, scan.image, rec.mask, ev.tau);
                write_error_map_preview_svg(p.binary, ev.reversed_preview,
                                            (dir / "error_map_preview.svg").string());
            }
            write_run_manifest(dir,
                               json{{"command", "eval"},
                                    {"checkpoints", fs::absolute(ev.checkpoints).string()},
                                    {"dataset_manifest", fs::absolute(manifest).string()},
                                    {"fold", fold.fold},
                                    {"tau", ev.tau},
                                    {"classes", fold.classes},
                                    {"experiment", experiment_json(fold.cfg)}},
                               argc, argv);
            std::cout << "evaluated " << rep.rows.size() << " masks, PCC(QI,Acc) = "
                      << corr.pcc_qi_acc << ", MAE = " << corr.mae_qi_acc << " -> " << ev.out
                      << "\n";
        } else if (*crossval) {
            ensure_dir(cv.out);
            const fs::path dir(cv.out);
            if (!(cv.tau > 0.0 && cv.tau < 1.0))
                throw ValueError("--tau must lie in (0,1)");
            ExperimentConfig cfg = default_experiment();
            cfg.k = cv.k;
            cfg.master_seed = cv.seed;
            cfg.tau = cv.tau;
            cfg.prep.target_spacing = cv.spacing;
            cfg.prep.roi_margin = cv.margin;
            cv.knobs.apply(cfg);

            const auto scans = load_and_preprocess(cv.manifest, cfg.prep);
            const int classes = dataset_classes(scans);
            CrossValOutput out = run_cross_validation(scans, cfg, cv.jobs);

            for (std::size_t f = 0; f < out.folds.size(); ++f) {
                const fs::path fdir = dir / ("fold_" + std::to_string(f));
                ensure_dir(fdir.string());
                const auto& fold = out.folds[f];
                save_checkpoint(fold.seg3d.params(), (fdir / "seg3d.ckpt").string());
                save_checkpoint(fold.seg2d.params(), (fdir / "seg2d.ckpt").string());
                save_checkpoint(fold.predictor.params(), (fdir / "predictor.ckpt").string());
                write_loss_csv(fold.seg3d_log, (fdir / "loss_seg3d.csv").string());
                write_loss_csv(fold.seg2d_log, (fdir / "loss_seg2d.csv").string());
                write_loss_csv(fold.pred_log, (fdir / "loss_predictor.csv").string());
                write_eval_outputs(fdir, fold.report, *fold.report.corr);
            }
            const QiCorrelation pooled_corr = *out.pooled.corr;
            write_eval_outputs(dir, out.pooled, pooled_corr, "pooled_");
            write_run_manifest(dir,
                               json{{"command", "crossval"},
                                    {"dataset_manifest", fs::absolute(cv.manifest).string()},
                                    {"jobs", cv.jobs},
                                    {"classes", classes},
                                    {"experiment", experiment_json(cfg)}},
                               argc, argv);
            std::cout << "crossval k=" << cfg.k << " on " << scans.size()
                      << " scans: pooled PCC(QI,Acc) = " << pooled_corr.pcc_qi_acc
                      << ", MAE = " << pooled_corr.mae_qi_acc << " -> " << cv.out << "\n";
        } else if (*report) {
            ensure_dir(rp.out);
            const fs::path dir(rp.out);
            const auto rows = read_scatter_csv(rp.scatter);
            if (rows.size() < 2) throw ValueError("report: need at least 2 scatter rows");
            std::vector<double> qi, acc, dsc;
            for (const auto& r : rows) {
                qi.push_back(r.qi);
                acc.push_back(r.acc);
                dsc.push_back(r.dsc);
            }
            std::ofstream sum(dir / "summary.txt", std::ios::trunc);
            sum << "masks = " << rows.size() << "\n";
            sum << "PCC_QI_Acc = " << pearson(qi, acc) << "\n";
            sum << "PCC_QI_DSC = " << pearson(qi, dsc) << "\n";
            sum << "MAE_QI_Acc = " << mae(qi, acc) << "\n";
            write_scatter_svg(rows, false, (dir / "scatter_qi_acc.svg").string());
            write_scatter_svg(rows, true, (dir / "scatter_qi_dsc.svg").string());
            write_dsc_histogram_svg(rows, rp.bins, (dir / "hist_dsc.svg").string());
            write_run_manifest(dir,
                               json{{"command", "report"},
                                    {"scatter", fs::absolute(rp.scatter).string()},
                                    {"bins", rp.bins}},
                               argc, argv);
            std::cout << "report regenerated from " << rows.size() << " rows -> " << rp.out
                      << "\n";
        }
    } catch (const IoError& e) {
        std::cerr << "IO error: " << e.what() << "\n";
        return 3;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 4;
    } catch (const ValueError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
