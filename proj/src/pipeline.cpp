#include "voxqa/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <thread>
#include <tuple>

#include "voxqa/checkpoint.hpp"

namespace voxqa {

const char* source_name(MaskSource s) {
    switch (s) {
        case MaskSource::Seg3D: return "3D";
        case MaskSource::Seg2D: return "2D";
        case MaskSource::GroundTruth: return "GT";
    }
    return "?";
}

std::string mask_type_name(MaskSource source, HeadId head) {
    if (source == MaskSource::GroundTruth) return "GT";
    const std::string prefix = source_name(source);
    switch (head) {
        case HeadId::Final: return prefix + "-Final";
        case HeadId::Side2: return prefix + "-2";
        case HeadId::Side3: return prefix + "-3";
        case HeadId::Side4: return prefix + "-4";
        case HeadId::Side5: return prefix + "-5";
        default: return prefix + "-?";
    }
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag) {
    std::uint64_t z = master ^ (0x9e3779b97f4a7c15ull * (tag + 1));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

Scan preprocess(std::string id, const VoxelGrid& image, const LabelMask& gt,
                const PreprocessConfig& cfg) {
    if (image.dims != gt.dims)
        throw ShapeError("preprocess: image/gt dims differ for scan " + id);
    VoxelGrid img = resample_isotropic(image, cfg.target_spacing, Interp::Trilinear);
    LabelMask lab = resample_isotropic(gt, cfg.target_spacing);
    img = normalize_intensity(img);
    const BoundingBox roi = roi_from_mask(lab, cfg.roi_margin);
    return Scan{std::move(id), crop(img, roi), crop(lab, roi)};
}

// ---------------------------------------------------------------------------
// tensor plumbing

namespace {

nn::Tensor<float> stack_images(const std::vector<VoxelGrid>& patches, int rank) {
    const Dims d = patches[0].dims;
    const std::size_t vox = d.count();
    std::vector<float> data;
    data.reserve(patches.size() * vox);
    for (const auto& p : patches) {
        if (p.dims != d) throw ShapeError("batch: patch dims differ");
        data.insert(data.end(), p.data.begin(), p.data.end());
    }
    nn::Shape shape = rank == 3 ? nn::Shape{patches.size(), 1, d.d, d.h, d.w}
                                : nn::Shape{patches.size(), 1, d.h, d.w};
    return nn::Tensor<float>::from_values(std::move(shape), std::move(data));
}

std::vector<std::uint8_t> stack_labels(const std::vector<LabelMask>& patches) {
    std::vector<std::uint8_t> out;
    for (const auto& p : patches) out.insert(out.end(), p.labels.begin(), p.labels.end());
    return out;
}

// (B, K, spatial) one-hot target from flat labels
nn::Tensor<float> one_hot_target(const std::vector<std::uint8_t>& labels, std::size_t batch,
                                 std::size_t k, const nn::Shape& like) {
    const std::size_t vox = labels.size() / batch;
    std::vector<float> v(batch * k * vox, 0.0f);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < vox; ++i)
            v[(b * k + labels[b * vox + i]) * vox + i] = 1.0f;
    nn::Shape shape = like;
    shape[1] = k;
    return nn::Tensor<float>::from_values(std::move(shape), std::move(v));
}

// per-voxel channel argmax of a (1,K,spatial) probability tensor
LabelMask argmax_mask(const nn::Tensor<float>& probs, const Dims& dims, const Spacing& spacing,
                      int num_classes) {
    const std::size_t k = probs.shape()[1];
    const std::size_t vox = dims.count();
    std::vector<std::uint8_t> labels(vox);
    const float* p = probs.data();
    for (std::size_t i = 0; i < vox; ++i) {
        std::size_t best = 0;
        float bv = p[i];
        for (std::size_t c = 1; c < k; ++c) {
            const float v = p[c * vox + i];
            if (v > bv) {
                bv = v;
                best = c;
            }
        }
        labels[i] = static_cast<std::uint8_t>(best);
    }
    return LabelMask(dims, spacing, std::move(labels), num_classes);
}

nn::Tensor<float> image_tensor(const VoxelGrid& g) {
    return nn::Tensor<float>::from_values({1, 1, g.dims.d, g.dims.h, g.dims.w}, g.data);
}

// (1, C+1, d, h, w) one-hot of a mask
nn::Tensor<float> mask_onehot_tensor(const LabelMask& m) {
    auto oh = one_hot(m); // (C+1, d, h, w)
    nn::Shape s = {1};
    for (const auto d : oh.shape()) s.push_back(d);
    return nn::Tensor<float>::from_values(std::move(s), oh.values());
}

struct AugmentedTriple {
    VoxelGrid image;
    LabelMask gt;
    LabelMask mask; // only when a candidate mask rides along
    bool has_mask = false;
};

// One geometric transform applied to image+gt (and optionally a mask) by
// replaying the same rng state on the second pair.
AugmentedTriple augment_sample(const VoxelGrid& image, const LabelMask& gt,
                               const LabelMask* mask, const AugmentConfig& a, Dims patch,
                               Rng& rng) {
    AugmentedTriple t;
    t.has_mask = mask != nullptr;

    Rng replay = rng;
    auto [ci, cg] = random_crop(image, gt, patch, rng);
    LabelMask cm;
    if (mask) cm = random_crop(image, *mask, patch, replay).second;

    if (a.flips) {
        replay = rng;
        auto [fi, fg] = random_flip(ci, cg, rng);
        if (mask) cm = random_flip(ci, cm, replay).second;
        ci = std::move(fi);
        cg = std::move(fg);
    }

    replay = rng;
    auto [si, sg] = random_scale(ci, cg, a.scale_lo, a.scale_hi, rng);
    if (mask) cm = random_scale(ci, cm, a.scale_lo, a.scale_hi, replay).second;

    t.image = std::move(si);
    t.gt = std::move(sg);
    if (mask) t.mask = std::move(cm);
    return t;
}

// axial slice (first spatial axis) as a singleton-depth volume
std::pair<VoxelGrid, LabelMask> take_slice(const Scan& scan, std::size_t z) {
    const Dims d = scan.image.dims;
    const Dims sd{1, d.h, d.w};
    std::vector<float> img(sd.count());
    std::vector<std::uint8_t> lab(sd.count());
    const std::size_t off = z * d.h * d.w;
    std::copy(scan.image.data.begin() + off, scan.image.data.begin() + off + sd.count(),
              img.begin());
    std::copy(scan.gt.labels.begin() + off, scan.gt.labels.begin() + off + sd.count(),
              lab.begin());
    return {VoxelGrid(sd, scan.image.spacing, std::move(img)),
            LabelMask(sd, scan.gt.spacing, std::move(lab), scan.gt.num_classes)};
}

template <typename MakeLoss>
void training_loop(std::vector<nn::Parameter<float>>& params, const TrainConfig& cfg,
                   MakeLoss make_loss, TrainLog* log) {
    nn::AdamOptimizer<float> adam(cfg.learning_rate);
    nn::SgdOptimizer<float> sgd(cfg.learning_rate);
    const bool use_sgd = cfg.optimizer == "sgd";
    if (!use_sgd && cfg.optimizer != "adam")
        throw ValueError("train: unknown optimizer '" + cfg.optimizer + "'");

    Rng rng(derive_seed(cfg.seed, 0x7121));
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0;
        for (std::size_t step = 0; step < cfg.steps_per_epoch; ++step) {
            nn::zero_grads(params);
            nn::Tensor<float> loss = make_loss(rng);
            const float lv = loss.item();
            if (!std::isfinite(lv))
                throw DivergenceError("training diverged: non-finite loss at epoch " +
                                      std::to_string(epoch) + " step " + std::to_string(step));
            nn::backward(loss);
            if (use_sgd)
                sgd.step(params);
            else
                adam.step(params);
            epoch_loss += lv;
        }
        if (log && cfg.steps_per_epoch > 0)
            log->epoch_mean_loss.push_back(epoch_loss / double(cfg.steps_per_epoch));
    }
}

// summed CE + Dice over all five heads
nn::Tensor<float> deep_supervision_loss(
    std::vector<std::pair<HeadId, nn::Tensor<float>>>& heads,
    const std::vector<std::uint8_t>& labels, const nn::Tensor<float>& target_onehot,
    nn::DiceMode mode, float ce_w, float dice_w) {
    nn::Tensor<float> total;
    for (auto& [id, probs] : heads) {
        auto term = nn::add(nn::scale(nn::cross_entropy(probs, labels), ce_w),
                            nn::scale(nn::dice_loss(probs, target_onehot, mode), dice_w));
        total = total.valid() ? nn::add(total, term) : term;
    }
    return total;
}

} // namespace

SegNet train_segmentor(const std::vector<Scan>& train_set, const NetConfig& net_cfg,
                       const TrainConfig& cfg, int rank, TrainLog* log) {
    if (train_set.empty()) throw ValueError("train_segmentor: empty training set");
    if (cfg.batch_size == 0) throw ValueError("train_segmentor: batch_size must be positive");
    validate(cfg.augment);
    const int c_count = train_set[0].gt.num_classes;
    for (const auto& s : train_set)
        if (s.gt.num_classes != c_count)
            throw ValueError("train_segmentor: inconsistent class counts in dataset");

    NetConfig net = net_cfg;
    net.rank = rank;
    net.in_channels = 1;
    net.out_classes = static_cast<std::size_t>(c_count) + 1;
    SegNet model = build_segmentor(net, derive_seed(cfg.seed, 0x1417));

    const Dims patch = rank == 3 ? cfg.augment.patch3d : cfg.augment.patch2d;
    auto make_loss = [&](Rng& rng) {
        std::vector<VoxelGrid> imgs;
        std::vector<LabelMask> labs;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            const std::size_t idx = rng.below(train_set.size());
            const Scan& scan = train_set[idx];
            if (log) log->sampled_scan_ids.push_back(scan.id);
            if (rank == 3) {
                auto aug = augment_sample(scan.image, scan.gt, nullptr, cfg.augment, patch, rng);
                imgs.push_back(std::move(aug.image));
                labs.push_back(std::move(aug.gt));
            } else {
                const std::size_t z = rng.below(scan.image.dims.d);
                auto [si, sg] = take_slice(scan, z);
                auto aug = augment_sample(si, sg, nullptr, cfg.augment, patch, rng);
                imgs.push_back(std::move(aug.image));
                labs.push_back(std::move(aug.gt));
            }
        }
        auto x = stack_images(imgs, rank);
        auto labels = stack_labels(labs);
        auto heads = model.forward_all_heads(x, true);
        auto target = one_hot_target(labels, imgs.size(), net.out_classes,
                                     heads[0].second.shape());
        return deep_supervision_loss(heads, labels, target, nn::DiceMode::Multiclass,
                                     cfg.ce_weight, cfg.dice_weight);
    };
    training_loop(model.params(), cfg, make_loss, log);
    return model;
}

namespace {

// all five masks of one scan from one model; 2D models run on the slice
// batch and the per-head argmax volumes are restacked
std::vector<std::pair<HeadId, LabelMask>> masks_for_scan(SegNet& model, const Scan& scan) {
    nn::NoGradGuard ng;
    std::vector<std::pair<HeadId, LabelMask>> out;
    const Dims d = scan.image.dims;
    if (model.config().rank == 3) {
        auto heads = model.forward_all_heads(image_tensor(scan.image), false);
        for (auto& [id, probs] : heads)
            out.emplace_back(id, argmax_mask(probs, scan.image.dims, scan.image.spacing,
                                             scan.gt.num_classes));
        return out;
    }
    // slice batch: (d, 1, h, w)
    auto x = nn::Tensor<float>::from_values({d.d, 1, d.h, d.w}, scan.image.data);
    auto heads = model.forward_all_heads(x, false);
    const std::size_t sp = d.h * d.w;
    const std::size_t k = heads[0].second.shape()[1];
    for (auto& [id, probs] : heads) {
        std::vector<std::uint8_t> labels(d.count());
        const float* p = probs.data();
        for (std::size_t z = 0; z < d.d; ++z)
            for (std::size_t i = 0; i < sp; ++i) {
                std::size_t best = 0;
                float bv = p[(z * k) * sp + i];
                for (std::size_t c = 1; c < k; ++c) {
                    const float v = p[(z * k + c) * sp + i];
                    if (v > bv) {
                        bv = v;
                        best = c;
                    }
                }
                labels[z * sp + i] = static_cast<std::uint8_t>(best);
            }
        out.emplace_back(id, LabelMask(d, scan.gt.spacing, std::move(labels),
                                       scan.gt.num_classes));
    }
    return out;
}

} // namespace

std::vector<MaskRecord> generate_masks(SegNet& seg3d, SegNet& seg2d,
                                       const std::vector<Scan>& scans) {
    if (seg3d.config().rank != 3 || seg2d.config().rank != 2)
        throw ValueError("generate_masks: expected a 3D and a 2D segmentor");
    std::vector<MaskRecord> records;
    records.reserve(scans.size() * 10);
    for (const auto& scan : scans) {
        for (auto& [id, mask] : masks_for_scan(seg3d, scan))
            records.push_back({scan.id, MaskSource::Seg3D, id, std::move(mask)});
        for (auto& [id, mask] : masks_for_scan(seg2d, scan))
            records.push_back({scan.id, MaskSource::Seg2D, id, std::move(mask)});
    }
    return records;
}

void append_gt_records(std::vector<MaskRecord>& records, const std::vector<Scan>& scans) {
    for (const auto& scan : scans)
        records.push_back({scan.id, MaskSource::GroundTruth, HeadId::GTruth, scan.gt});
}

SegNet train_predictor(SegNet& seg3d, SegNet& seg2d, const std::vector<Scan>& train_set,
                       const NetConfig& net_cfg, const TrainConfig& cfg, TrainLog* log) {
    if (train_set.empty()) throw ValueError("train_predictor: empty training set");
    validate(cfg.augment);
    const int c_count = train_set[0].gt.num_classes;

    NetConfig net = net_cfg;
    net.rank = 3;
    net.in_channels = 1 + static_cast<std::size_t>(c_count) + 1;
    net.out_classes = 2;
    SegNet model = build_predictor(net, derive_seed(cfg.seed, 0x9231));

    // masks are a pure function of (scan, source, head) while the segmentors
    // stay frozen, so on-the-fly generation memoizes
    std::map<std::tuple<std::size_t, int, int>, LabelMask> cache;
    auto mask_for = [&](std::size_t scan_idx, int model_idx, int head_idx) -> const LabelMask& {
        const auto key = std::make_tuple(scan_idx, model_idx, head_idx);
        auto it = cache.find(key);
        if (it == cache.end()) {
            auto masks = masks_for_scan(model_idx == 0 ? seg3d : seg2d, train_set[scan_idx]);
            for (int h = 0; h < 5; ++h)
                cache.emplace(std::make_tuple(scan_idx, model_idx, h),
                              std::move(masks[h].second));
            it = cache.find(key);
        }
        return it->second;
    };

    const std::size_t combos = cfg.include_gt_masks ? 11 : 10;
    auto make_loss = [&](Rng& rng) {
        std::vector<VoxelGrid> imgs;
        std::vector<LabelMask> masks, gts;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            const std::size_t scan_idx = rng.below(train_set.size());
            const Scan& scan = train_set[scan_idx];
            if (log) log->sampled_scan_ids.push_back(scan.id);
            const std::size_t combo = rng.below(combos);
            const LabelMask* mask_ptr;
            if (combo == 10) {
                mask_ptr = &scan.gt; // optional GT-mask sampling
            } else {
                mask_ptr = &mask_for(scan_idx, static_cast<int>(combo / 5),
                                     static_cast<int>(combo % 5));
            }
            auto aug = augment_sample(scan.image, scan.gt, mask_ptr, cfg.augment,
                                      cfg.augment.patch3d, rng);
            imgs.push_back(std::move(aug.image));
            gts.push_back(std::move(aug.gt));
            masks.push_back(std::move(aug.mask));
        }
        // input: concat(image, one-hot mask); target: true error map
        const std::size_t batch = imgs.size();
        const Dims pd = imgs[0].dims;
        const std::size_t vox = pd.count();
        const std::size_t cin = 1 + static_cast<std::size_t>(c_count) + 1;
        std::vector<float> data(batch * cin * vox, 0.0f);
        std::vector<std::uint8_t> err_labels(batch * vox);
        for (std::size_t b = 0; b < batch; ++b) {
            float* base = data.data() + b * cin * vox;
            std::copy(imgs[b].data.begin(), imgs[b].data.end(), base);
            for (std::size_t i = 0; i < vox; ++i)
                base[(1 + masks[b].labels[i]) * vox + i] = 1.0f;
            const ErrorMap em = true_error_map(masks[b], gts[b]);
            std::copy(em.bits.begin(), em.bits.end(), err_labels.begin() + b * vox);
        }
        auto x = nn::Tensor<float>::from_values({batch, cin, pd.d, pd.h, pd.w},
                                                std::move(data));
        auto heads = model.forward_all_heads(x, true);
        auto target = one_hot_target(err_labels, batch, 2, heads[0].second.shape());
        return deep_supervision_loss(heads, err_labels, target, nn::DiceMode::Binary,
                                     cfg.ce_weight, cfg.dice_weight);
    };
    training_loop(model.params(), cfg, make_loss, log);
    return model;
}

Prediction predict_error_map(SegNet& predictor, const VoxelGrid& image, const LabelMask& mask,
                             double tau) {
    if (image.dims != mask.dims)
        throw ShapeError("predict_error_map: image dims " + image.dims.str() +
                         " vs mask dims " + mask.dims.str());
    const std::size_t expect_in = 1 + static_cast<std::size_t>(mask.num_classes) + 1;
    if (predictor.config().in_channels != expect_in)
        throw ShapeError("predict_error_map: predictor expects " +
                         std::to_string(predictor.config().in_channels) +
                         " input channels, mask implies " + std::to_string(expect_in));
    nn::NoGradGuard ng;
    auto x = nn::concat_channels<float>({image_tensor(image), mask_onehot_tensor(mask)});
    auto probs = predictor.forward_final(x, false);
    const std::size_t vox = image.dims.count();
    std::vector<float> soft(probs.values().begin() + static_cast<std::ptrdiff_t>(vox),
                            probs.values().begin() + static_cast<std::ptrdiff_t>(2 * vox));
    Prediction out;
    out.soft = SoftErrorMap(image.dims, std::move(soft));
    out.binary = binarize(out.soft, tau);
    out.qi = quality_indicator(out.binary);
    return out;
}

SoftMapFn model_soft_maps(SegNet& predictor) {
    return [&predictor](const Scan& scan, const LabelMask& mask) {
        return predict_error_map(predictor, scan.image, mask, 0.5).soft;
    };
}

SoftMapFn oracle_soft_maps() {
    return [](const Scan& scan, const LabelMask& mask) {
        const ErrorMap em = true_error_map(mask, scan.gt);
        std::vector<float> probs(em.bits.begin(), em.bits.end());
        return SoftErrorMap(em.dims, std::move(probs));
    };
}

namespace {

int source_rank(MaskSource s) {
    switch (s) {
        case MaskSource::Seg3D: return 0;
        case MaskSource::Seg2D: return 1;
        case MaskSource::GroundTruth: return 2;
    }
    return 3;
}

int head_rank(HeadId h) {
    switch (h) {
        case HeadId::Side2: return 0;
        case HeadId::Side3: return 1;
        case HeadId::Side4: return 2;
        case HeadId::Side5: return 3;
        case HeadId::Final: return 4;
        case HeadId::GTruth: return 5;
    }
    return 6;
}

GroupRow mean_of(const std::string& name, const std::vector<const EvalRow*>& rows) {
    GroupRow g;
    g.mask_type = name;
    g.n = rows.size();
    for (const auto* r : rows) {
        g.dsc += r->dsc;
        g.acc += r->acc;
        g.prec += r->prec;
        g.recl += r->recl;
        g.seg_dsc += r->seg_dsc;
        g.seg_acc += r->seg_acc;
    }
    if (!rows.empty()) {
        const double n = static_cast<double>(rows.size());
        g.dsc /= n;
        g.acc /= n;
        g.prec /= n;
        g.recl /= n;
        g.seg_dsc /= n;
        g.seg_acc /= n;
    }
    return g;
}

std::vector<GroupRow> build_groups(const std::vector<EvalRow>& rows) {
    std::vector<GroupRow> groups;
    auto collect = [&rows](auto pred) {
        std::vector<const EvalRow*> out;
        for (const auto& r : rows)
            if (pred(r)) out.push_back(&r);
        return out;
    };
    static const HeadId head_order[5] = {HeadId::Final, HeadId::Side2, HeadId::Side3,
                                         HeadId::Side4, HeadId::Side5};
    for (const MaskSource src : {MaskSource::Seg3D, MaskSource::Seg2D})
        for (const HeadId head : head_order) {
            auto members = collect(
                [&](const EvalRow& r) { return r.source == src && r.head == head; });
            if (!members.empty()) groups.push_back(mean_of(mask_type_name(src, head), members));
        }
    auto gt_rows =
        collect([](const EvalRow& r) { return r.source == MaskSource::GroundTruth; });
    if (!gt_rows.empty()) groups.push_back(mean_of("GT", gt_rows));
    auto rows3d = collect([](const EvalRow& r) { return r.source == MaskSource::Seg3D; });
    if (!rows3d.empty()) groups.push_back(mean_of("3D-Average", rows3d));
    auto rows2d = collect([](const EvalRow& r) { return r.source == MaskSource::Seg2D; });
    if (!rows2d.empty()) groups.push_back(mean_of("2D-Average", rows2d));
    auto auto_rows =
        collect([](const EvalRow& r) { return r.source != MaskSource::GroundTruth; });
    if (!auto_rows.empty()) groups.push_back(mean_of("Overall-auto", auto_rows));
    if (!gt_rows.empty()) {
        auto all = collect([](const EvalRow&) { return true; });
        groups.push_back(mean_of("Overall-GT", all));
    }
    return groups;
}

} // namespace

EvalReport evaluate(const SoftMapFn& soft_maps, const std::vector<MaskRecord>& records,
                    const std::vector<Scan>& scans, double tau) {
    std::map<std::string, const Scan*> by_id;
    for (const auto& s : scans) by_id[s.id] = &s;

    EvalReport report;
    for (const auto& rec : records) {
        if ((rec.source == MaskSource::GroundTruth) != (rec.head == HeadId::GTruth))
            throw ValueError("evaluate: record for " + rec.scan_id +
                             " mixes GT source and network head tags");
        const auto it = by_id.find(rec.scan_id);
        if (it == by_id.end())
            throw ValueError("evaluate: no ground truth for scan " + rec.scan_id);
        const Scan& scan = *it->second;

        const SoftErrorMap soft = soft_maps(scan, rec.mask);
        const ErrorMap predicted = binarize(soft, tau);
        const ErrorMap truth = true_error_map(rec.mask, scan.gt);
        const MetricReport pred_metrics = metric_report(confusion(predicted.bits, truth.bits));

        EvalRow row;
        row.scan_id = rec.scan_id;
        row.source = rec.source;
        row.head = rec.head;
        row.dsc = pred_metrics.dsc;
        row.acc = pred_metrics.acc;
        row.prec = pred_metrics.prec;
        row.recl = pred_metrics.recl;
        row.seg_dsc = dice_multiclass(rec.mask, scan.gt).mean;
        row.seg_acc = qi_from_truth(rec.mask, scan.gt);
        row.qi = quality_indicator(predicted);
        report.rows.push_back(std::move(row));
    }
    std::stable_sort(report.rows.begin(), report.rows.end(),
                     [](const EvalRow& a, const EvalRow& b) {
                         return std::make_tuple(a.scan_id, source_rank(a.source),
                                                head_rank(a.head)) <
                                std::make_tuple(b.scan_id, source_rank(b.source),
                                                head_rank(b.head));
                     });
    report.groups = build_groups(report.rows);
    return report;
}

QiCorrelation correlate_qi(const EvalReport& report) {
    if (report.rows.size() < 2)
        throw ValueError("correlate_qi: need at least 2 evaluated masks");
    std::vector<double> qi, acc, dsc;
    QiCorrelation corr;
    for (const auto& r : report.rows) {
        qi.push_back(r.qi);
        acc.push_back(r.seg_acc);
        dsc.push_back(r.seg_dsc);
        corr.scatter.push_back({r.scan_id, source_name(r.source), head_code(r.head), r.qi,
                                r.seg_acc, r.seg_dsc});
    }
    corr.pcc_qi_acc = pearson(qi, acc);
    corr.pcc_qi_dsc = pearson(qi, dsc);
    corr.mae_qi_acc = mae(qi, acc);
    return corr;
}

ExperimentConfig default_experiment() {
    ExperimentConfig cfg;
    cfg.seg_net.base_channels = 8;
    cfg.seg_net.blocks_per_stage = 1;
    cfg.k = 2;
    cfg.tau = 0.5;

    cfg.seg3d_train.epochs = 8;
    cfg.seg3d_train.steps_per_epoch = 40;
    cfg.seg3d_train.learning_rate = 2e-3f;

    cfg.seg2d_train = cfg.seg3d_train;

    cfg.pred_train.epochs = 20;
    cfg.pred_train.steps_per_epoch = 40;
    cfg.pred_train.learning_rate = 2e-3f;
    return cfg;
}

FoldModels train_fold_models(const std::vector<Scan>& train_scans, const ExperimentConfig& cfg,
                             std::size_t fold_index) {
    TrainConfig t3 = cfg.seg3d_train;
    t3.seed = derive_seed(cfg.master_seed, fold_index * 8 + 1);
    TrainConfig t2 = cfg.seg2d_train;
    t2.seed = derive_seed(cfg.master_seed, fold_index * 8 + 2);
    TrainConfig tp = cfg.pred_train;
    tp.seed = derive_seed(cfg.master_seed, fold_index * 8 + 3);

    TrainLog log3, log2, logp;
    SegNet seg3d = train_segmentor(train_scans, cfg.seg_net, t3, 3, &log3);
    SegNet seg2d = train_segmentor(train_scans, cfg.seg_net, t2, 2, &log2);
    SegNet predictor = train_predictor(seg3d, seg2d, train_scans, cfg.seg_net, tp, &logp);
    return FoldModels{std::move(seg3d),  std::move(seg2d), std::move(predictor),
                      std::move(log3),   std::move(log2),  std::move(logp)};
}

CrossValOutput run_cross_validation(const std::vector<Scan>& dataset,
                                    const ExperimentConfig& cfg, std::size_t jobs) {
    if (dataset.size() < cfg.k)
        throw ValueError("run_cross_validation: dataset smaller than k");
    std::vector<std::string> ids;
    for (const auto& s : dataset) ids.push_back(s.id);
    const auto folds = kfold_split(ids, cfg.k, derive_seed(cfg.master_seed, kSplitTag));

    std::map<std::string, const Scan*> by_id;
    for (const auto& s : dataset) by_id[s.id] = &s;

    std::vector<std::optional<FoldOutput>> slots(folds.size());
    auto run_fold = [&](std::size_t f) {
        const FoldSplit& split = folds[f];
        std::vector<Scan> train, test;
        for (const auto& id : split.train_ids) train.push_back(*by_id.at(id));
        for (const auto& id : split.test_ids) test.push_back(*by_id.at(id));

        FoldModels models = train_fold_models(train, cfg, f);

        std::vector<MaskRecord> records = generate_masks(models.seg3d, models.seg2d, test);
        append_gt_records(records, test);
        EvalReport report =
            evaluate(model_soft_maps(models.predictor), records, test, cfg.tau);
        report.corr = correlate_qi(report);

        slots[f] = FoldOutput{split,
                              std::move(models.seg3d),
                              std::move(models.seg2d),
                              std::move(models.predictor),
                              std::move(models.seg3d_log),
                              std::move(models.seg2d_log),
                              std::move(models.pred_log),
                              std::move(records),
                              std::move(report)};
    };

    if (jobs <= 1) {
        for (std::size_t f = 0; f < folds.size(); ++f) run_fold(f);
    } else {
        std::size_t next = 0;
        while (next < folds.size()) {
            const std::size_t batch = std::min(jobs, folds.size() - next);
            std::vector<std::thread> workers;
            for (std::size_t i = 0; i < batch; ++i)
                workers.emplace_back(run_fold, next + i);
            for (auto& w : workers) w.join();
            next += batch;
        }
    }

    CrossValOutput out;
    for (auto& slot : slots) out.folds.push_back(std::move(*slot));

    // pooled report: concatenate fold rows (fold-major order), regroup
    for (const auto& fold : out.folds)
        out.pooled.rows.insert(out.pooled.rows.end(), fold.report.rows.begin(),
                               fold.report.rows.end());
    out.pooled.groups = build_groups(out.pooled.rows);
    out.pooled.corr = correlate_qi(out.pooled);
    return out;
}

} // namespace voxqa
