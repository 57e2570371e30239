// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// fails. The end-to-end and determinism criteria drive the voxqa CLI binary
// (path via --cli); everything else runs in-process.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "voxqa/checkpoint.hpp"
#include "voxqa/pipeline.hpp"
#include "voxqa/reporting.hpp"

namespace fs = std::filesystem;
using namespace voxqa;
using nn::Tensor;

namespace {

std::string g_cli;
fs::path g_work;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

LabelMask random_mask(Rng& rng, Dims dims, int classes) {
    std::vector<std::uint8_t> labels(dims.count());
    for (auto& v : labels) v = static_cast<std::uint8_t>(rng.below(classes + 1));
    return LabelMask(dims, {1, 1, 1}, std::move(labels), classes);
}

template <typename T>
Tensor<T> random_tensor(Rng& rng, nn::Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<T> v(nn::shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
    return Tensor<T>::from_values(std::move(shape), std::move(v));
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = g_cli + " " + args + " > " + log.string() + " 2>&1";
    return std::system(cmd.c_str());
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) out.push_back(field);
    return out;
}

std::map<std::string, double> parse_summary(const fs::path& p) {
    std::map<std::string, double> vals;
    for (const auto& line : read_lines(p)) {
        const auto eq = line.find(" = ");
        if (eq != std::string::npos)
            try {
                vals[line.substr(0, eq)] = std::stod(line.substr(eq + 3));
            } catch (...) {
            }
    }
    return vals;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

// minimal XML well-formedness scan: balanced tags, quoted attributes consumed
bool xml_well_formed(const std::string& text) {
    std::vector<std::string> stack;
    std::size_t i = 0;
    if (text.rfind("<?xml", 0) == 0) {
        i = text.find("?>");
        if (i == std::string::npos) return false;
        i += 2;
    }
    while (i < text.size()) {
        if (text[i] != '<') {
            ++i;
            continue;
        }
        const std::size_t end = text.find('>', i);
        if (end == std::string::npos) return false;
        std::string tag = text.substr(i + 1, end - i - 1);
        i = end + 1;
        if (tag.empty()) return false;
        if (tag[0] == '/') {
            if (stack.empty()) return false;
            const std::string name = tag.substr(1);
            if (stack.back() != name) return false;
            stack.pop_back();
            continue;
        }
        const bool self_closing = tag.back() == '/';
        if (self_closing) tag.pop_back();
        const std::size_t sp = tag.find_first_of(" \t\n");
        const std::string name = sp == std::string::npos ? tag : tag.substr(0, sp);
        if (name.empty()) return false;
        if (!self_closing) stack.push_back(name);
    }
    return stack.empty();
}

// -------------------------------------------------------------------------
// criteria

bool metric_oracle_equivalence(std::string& detail) {
    Rng rng(0xACC1);
    for (int t = 0; t < 200; ++t) {
        const Dims dims{8, 8, 8};
        // binary metric check
        std::vector<std::uint8_t> p(512), q(512);
        for (auto& b : p) b = rng.uniform() < 0.3 ? 1 : 0;
        for (auto& b : q) b = rng.uniform() < 0.3 ? 1 : 0;
        std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
        for (int i = 0; i < 512; ++i) {
            if (p[i] && q[i]) ++tp;
            if (p[i] && !q[i]) ++fp;
            if (!p[i] && q[i]) ++fn;
            if (!p[i] && !q[i]) ++tn;
        }
        const ConfusionCounts c = confusion(p, q);
        if (c.tp != tp || c.fp != fp || c.tn != tn || c.fn != fn) {
            detail = "confusion counts mismatch";
            return false;
        }
        const double dsc_oracle =
            (2 * tp + fp + fn) == 0 ? 1.0
                                    : 2.0 * double(tp) / double(2 * tp + fp + fn);
        if (dice_binary(c) != dsc_oracle) {
            detail = "dsc mismatch";
            return false;
        }
        const AccPrecRecl apr = acc_prec_recl(c);
        if (apr.acc != double(tp + tn) / 512.0) {
            detail = "acc mismatch";
            return false;
        }
        const double prec_oracle =
            (tp + fp) == 0 ? ((tp + fn) == 0 ? 1.0 : 0.0) : double(tp) / double(tp + fp);
        const double recl_oracle = (tp + fn) == 0 ? 1.0 : double(tp) / double(tp + fn);
        if (apr.prec != prec_oracle || apr.recl != recl_oracle) {
            detail = "prec/recl mismatch";
            return false;
        }

        // multiclass: per-class exhaustive reduction
        LabelMask a = random_mask(rng, dims, 3), b = random_mask(rng, dims, 3);
        const MulticlassDice mc = dice_multiclass(a, b);
        double mean = 0;
        for (int cls = 1; cls <= 3; ++cls) {
            std::uint64_t ctp = 0, cfp = 0, cfn = 0;
            for (int i = 0; i < 512; ++i) {
                const bool pa = a.labels[i] == cls, pb = b.labels[i] == cls;
                if (pa && pb) ++ctp;
                if (pa && !pb) ++cfp;
                if (!pa && pb) ++cfn;
            }
            const double d = (2 * ctp + cfp + cfn) == 0
                                 ? 1.0
                                 : 2.0 * double(ctp) / double(2 * ctp + cfp + cfn);
            if (mc.per_class[cls - 1] != d) {
                detail = "multiclass dsc mismatch, class " + std::to_string(cls);
                return false;
            }
            mean += d;
        }
        if (mc.mean != mean / 3.0) {
            detail = "multiclass mean mismatch";
            return false;
        }
    }
    detail = "200 random pairs exact";
    return true;
}

bool qi_identity(std::string& detail) {
    Rng rng(0xACC2);
    for (int t = 0; t < 100; ++t) {
        LabelMask s = random_mask(rng, {6, 7, 5}, 3);
        LabelMask gt = random_mask(rng, {6, 7, 5}, 3);
        std::uint64_t match = 0;
        for (std::size_t i = 0; i < s.labels.size(); ++i) match += s.labels[i] == gt.labels[i];
        const double acc = double(match) / double(s.labels.size());
        if (qi_from_truth(s, gt) != acc) {
            detail = "QI != Acc";
            return false;
        }
        if (true_error_map(s, gt).bits != true_error_map(gt, s).bits) {
            detail = "error map not symmetric";
            return false;
        }
    }
    detail = "100 random pairs exact, symmetric";
    return true;
}

template <typename T>
bool layer_checks(double tol, std::string& detail) {
    Rng rng(0xACC3);
    using P = nn::Parameter<T>;
    double worst = 0;
    std::string worst_name;
    auto run = [&](const std::string& name, std::vector<P>& params,
                   std::function<Tensor<T>()> loss) {
        const auto res = nn::grad_check<T>(loss, params);
        if (res.max_rel_err > worst) {
            worst = res.max_rel_err;
            worst_name = name + "/" + res.worst;
        }
    };

    {
        std::vector<P> p;
        p.push_back({"x", random_tensor<T>(rng, {1, 2, 4, 4, 4}).set_requires_grad(true)});
        p.push_back({"w", random_tensor<T>(rng, {2, 2, 3, 3, 3}).set_requires_grad(true)});
        p.push_back({"b", random_tensor<T>(rng, {2}).set_requires_grad(true)});
        run("conv3", p, [&] {
            return nn::mean(nn::mul(nn::conv(p[0].value, p[1].value, p[2].value, 1, 1),
                                    nn::conv(p[0].value, p[1].value, p[2].value, 1, 1)));
        });
    }
    {
        std::vector<P> p;
        p.push_back({"x", random_tensor<T>(rng, {1, 2, 4, 4}).set_requires_grad(true)});
        p.push_back({"w", random_tensor<T>(rng, {3, 2, 3, 3}).set_requires_grad(true)});
        run("conv2", p, [&] {
            auto y = nn::conv(p[0].value, p[1].value, Tensor<T>(), 2, 1);
            return nn::mean(nn::mul(y, y));
        });
    }
    {
        std::vector<P> p;
        p.push_back({"x", random_tensor<T>(rng, {1, 2, 3, 3, 3}).set_requires_grad(true)});
        p.push_back({"w", random_tensor<T>(rng, {2, 2, 2, 2, 2}).set_requires_grad(true)});
        run("conv_transpose", p, [&] {
            auto y = nn::conv_transpose(p[0].value, p[1].value, 2);
            return nn::mean(nn::mul(y, y));
        });
    }
    {
        std::vector<P> p;
        p.push_back({"x", random_tensor<T>(rng, {2, 2, 3, 3}).set_requires_grad(true)});
        p.push_back({"g", random_tensor<T>(rng, {2}, 0.5, 1.5).set_requires_grad(true)});
        p.push_back({"be", random_tensor<T>(rng, {2}).set_requires_grad(true)});
        run("batch_norm_train", p, [&] {
            auto y = nn::batch_norm_train<T>(p[0].value, p[1].value, p[2].value, T(1e-5),
                                             nullptr, nullptr);
            return nn::mean(nn::mul(y, y));
        });
        std::vector<T> rm = {T(0.2), T(-0.1)}, rv = {T(1.2), T(0.7)};
        run("batch_norm_eval", p, [&, rm, rv] {
            auto y = nn::batch_norm_eval<T>(p[0].value, p[1].value, p[2].value, rm, rv,
                                            T(1e-5));
            return nn::mean(nn::mul(y, y));
        });
    }
    {
        std::vector<P> p;
        p.push_back({"a", random_tensor<T>(rng, {1, 3, 4, 4}).set_requires_grad(true)});
        p.push_back({"b", random_tensor<T>(rng, {1, 3, 4, 4}).set_requires_grad(true)});
        run("relu_softmax_add", p, [&] {
            auto s = nn::softmax_channels(nn::relu(nn::add(p[0].value, p[1].value)));
            return nn::mean(nn::mul(s, s));
        });
    }
    // composite losses through conv + softmax
    Rng lrng(0xACC4);
    {
        std::vector<std::uint8_t> labels(27);
        for (auto& v : labels) v = static_cast<std::uint8_t>(lrng.below(3));
        std::vector<T> oh(3 * 27, T(0));
        for (int i = 0; i < 27; ++i) oh[labels[i] * 27 + i] = T(1);
        auto target = Tensor<T>::from_values({1, 3, 3, 3, 3}, oh);
        std::vector<P> p;
        p.push_back({"x", random_tensor<T>(lrng, {1, 2, 3, 3, 3}).set_requires_grad(true)});
        p.push_back({"w", random_tensor<T>(lrng, {3, 2, 3, 3, 3}).set_requires_grad(true)});
        run("ce_multiclass_dice", p, [&] {
            auto probs = nn::softmax_channels(nn::conv(p[0].value, p[1].value, Tensor<T>(), 1, 1));
            return nn::add(nn::cross_entropy(probs, labels),
                           nn::dice_loss(probs, target, nn::DiceMode::Multiclass));
        });
    }
    {
        std::vector<std::uint8_t> labels(27);
        for (auto& v : labels) v = lrng.flip() ? 1 : 0;
        std::vector<T> oh(2 * 27, T(0));
        for (int i = 0; i < 27; ++i) oh[labels[i] * 27 + i] = T(1);
        auto target = Tensor<T>::from_values({1, 2, 3, 3, 3}, oh);
        std::vector<P> p;
        p.push_back({"x", random_tensor<T>(lrng, {1, 2, 3, 3, 3}).set_requires_grad(true)});
        p.push_back({"w", random_tensor<T>(lrng, {2, 2, 3, 3, 3}).set_requires_grad(true)});
        run("ce_binary_dice", p, [&] {
            auto probs = nn::softmax_channels(nn::conv(p[0].value, p[1].value, Tensor<T>(), 1, 1));
            return nn::add(nn::cross_entropy(probs, labels),
                           nn::dice_loss(probs, target, nn::DiceMode::Binary));
        });
    }
    std::ostringstream os;
    os << "max rel err " << worst << " (" << worst_name << ")";
    detail = os.str();
    return worst < tol;
}

bool gradient_correctness(std::string& detail) {
    std::string d64, d32;
    const bool ok64 = layer_checks<double>(1e-6, d64);
    const bool ok32 = layer_checks<float>(1e-3, d32);
    detail = "64-bit: " + d64 + "; 32-bit: " + d32;
    return ok64 && ok32;
}

bool adjoint_identity(std::string& detail) {
    Rng rng(0xACC5);
    double worst = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const int rank = trial % 2 == 0 ? 3 : 2;
        const std::size_t ci = 1 + rng.below(3), co = 1 + rng.below(3);
        const long long k = 1 + (long long)rng.below(3);
        const long long s = 1 + (long long)rng.below(2);
        const long long p = std::min<long long>((long long)rng.below(2), (k - 1) / 2);
        const std::size_t out_sp = 2 + rng.below(4);
        const std::size_t in = (std::size_t)((long long)(out_sp - 1) * s - 2 * p + k);

        nn::Shape xs = {1, ci}, ws = {co, ci};
        for (int a = 0; a < rank; ++a) {
            xs.push_back(in);
            ws.push_back((std::size_t)k);
        }
        auto x = random_tensor<float>(rng, xs);
        auto w = random_tensor<float>(rng, ws);
        auto cx = nn::conv(x, w, Tensor<float>(), s, p);
        auto y = random_tensor<float>(rng, cx.shape());
        auto yT = nn::conv_transpose(y, w, s, p);
        double lhs = 0, rhs = 0;
        for (std::size_t i = 0; i < cx.size(); ++i)
            lhs += double(cx.values()[i]) * double(y.values()[i]);
        for (std::size_t i = 0; i < x.size(); ++i)
            rhs += double(x.values()[i]) * double(yT.values()[i]);
        const double rel = std::abs(lhs - rhs) / std::max({1.0, std::abs(lhs), std::abs(rhs)});
        worst = std::max(worst, rel);
    }
    std::ostringstream os;
    os << "50 geometries, worst rel " << worst;
    detail = os.str();
    return worst < 1e-4;
}

bool overfit_sanity(std::string& detail) {
    PhantomSpec spec;
    spec.dims = {32, 32, 32};
    spec.num_foreground_classes = 3;
    spec.seed = 0x0F17;
    auto [img, gt] = generate_phantom(spec);
    PreprocessConfig prep;
    std::vector<Scan> one = {preprocess("p0", img, gt, prep)};

    // segmentor memorization: 200 steps
    NetConfig net;
    net.base_channels = 8;
    TrainConfig tcfg;
    tcfg.epochs = 5;
    tcfg.steps_per_epoch = 40;
    tcfg.learning_rate = 2e-3f;
    tcfg.seed = 7;
    SegNet seg3d = train_segmentor(one, net, tcfg, 3);
    LabelMask final_mask = [&] {
        nn::NoGradGuard ng;
        auto heads = seg3d.forward_all_heads(
            Tensor<float>::from_values(
                {1, 1, one[0].image.dims.d, one[0].image.dims.h, one[0].image.dims.w},
                one[0].image.data),
            false);
        const auto& probs = heads.back().second;
        const std::size_t vox = one[0].image.dims.count();
        std::vector<std::uint8_t> labels(vox);
        for (std::size_t i = 0; i < vox; ++i) {
            std::size_t best = 0;
            float bv = probs.values()[i];
            for (std::size_t c = 1; c < 4; ++c)
                if (probs.values()[c * vox + i] > bv) {
                    bv = probs.values()[c * vox + i];
                    best = c;
                }
            labels[i] = static_cast<std::uint8_t>(best);
        }
        return LabelMask(one[0].image.dims, one[0].gt.spacing, std::move(labels), 3);
    }();
    const double seg_dsc = dice_multiclass(final_mask, one[0].gt).mean;

    // predictor memorization of one fixed mask's true error map
    const ErrorMap truth = true_error_map(final_mask, one[0].gt);
    NetConfig pnet;
    pnet.base_channels = 8;
    pnet.in_channels = 1 + 4;
    pnet.out_classes = 2;
    SegNet pred = build_predictor(pnet, 11);
    auto x = nn::concat_channels<float>(
        {Tensor<float>::from_values(
             {1, 1, one[0].image.dims.d, one[0].image.dims.h, one[0].image.dims.w},
             one[0].image.data),
         [&] {
             auto oh = one_hot(final_mask);
             nn::Shape s = {1};
             for (const auto d : oh.shape()) s.push_back(d);
             return Tensor<float>::from_values(std::move(s), oh.values());
         }()});
    std::vector<std::uint8_t> err_labels(truth.bits.begin(), truth.bits.end());
    const std::size_t vox = truth.bits.size();
    std::vector<float> oh(2 * vox, 0.0f);
    for (std::size_t i = 0; i < vox; ++i) oh[err_labels[i] * vox + i] = 1.0f;
    auto target = Tensor<float>::from_values(
        {1, 2, truth.dims.d, truth.dims.h, truth.dims.w}, std::move(oh));

    nn::AdamOptimizer<float> opt(2e-3f);
    for (int step = 0; step < 220; ++step) {
        nn::zero_grads(pred.params());
        auto heads = pred.forward_all_heads(x, true);
        Tensor<float> loss;
        for (auto& [id, probs] : heads) {
            auto term = nn::add(nn::cross_entropy(probs, err_labels),
                                nn::dice_loss(probs, target, nn::DiceMode::Binary));
            loss = loss.valid() ? nn::add(loss, term) : term;
        }
        if (!std::isfinite(loss.item())) {
            detail = "predictor overfit diverged";
            return false;
        }
        nn::backward(loss);
        opt.step(pred.params());
    }
    const Prediction p = predict_error_map(pred, one[0].image, final_mask, 0.5);
    const double em_dsc = dice_binary(confusion(p.binary.bits, truth.bits));

    std::ostringstream os;
    os << "segmentor DSC " << seg_dsc << " (>= 0.9), predictor EM DSC " << em_dsc
       << " (>= 0.8)";
    detail = os.str();
    return seg_dsc >= 0.9 && em_dsc >= 0.8;
}

bool desk_scale_end_to_end(std::string& detail) {
    const fs::path dir = g_work / "e2e";
    fs::create_directories(dir);
    const fs::path data = dir / "data", cv = dir / "cv";
    if (run_cli("phantom --n 20 --dims 32 --classes 3 --seed 41 --out " + data.string(),
                dir / "phantom.log") != 0) {
        detail = "phantom generation failed, see " + (dir / "phantom.log").string();
        return false;
    }
    if (run_cli("crossval --manifest " + (data / "manifest.tsv").string() +
                    " --k 2 --seed 41 --out " + cv.string(),
                dir / "crossval.log") != 0) {
        detail = "crossval failed, see " + (dir / "crossval.log").string();
        return false;
    }

    // (a) mask multiplicity: 10 auto + 1 GT per scan
    const auto scatter = read_scatter_csv((cv / "pooled_scatter.csv").string());
    std::map<std::string, int> per_scan, gt_per_scan;
    for (const auto& r : scatter) {
        ++per_scan[r.scan_id];
        if (r.head_code == 0) ++gt_per_scan[r.scan_id];
    }
    if (per_scan.size() != 20) {
        detail = "expected 20 scans in pooled scatter, got " + std::to_string(per_scan.size());
        return false;
    }
    for (const auto& [scan, n] : per_scan)
        if (n != 11 || gt_per_scan[scan] != 1) {
            detail = scan + " has " + std::to_string(n) + " masks (want 10 auto + 1 GT)";
            return false;
        }
    const auto metrics_rows = read_lines(cv / "pooled_metrics.csv");
    if (metrics_rows.size() != 1 + 220) {
        detail = "pooled metrics csv has " + std::to_string(metrics_rows.size() - 1) +
                 " rows, want 220";
        return false;
    }

    // (b) pooled PCC / MAE
    const auto summary = parse_summary(cv / "pooled_summary.txt");
    const double pcc = summary.at("PCC_QI_Acc"), maev = summary.at("MAE_QI_Acc");

    // (c) overall-auto prediction DSC, (d) GT-mask prediction Acc
    double auto_dsc = -1, gt_acc = -1;
    for (const auto& line : read_lines(cv / "pooled_groups.csv")) {
        const auto f = split_csv(line);
        if (f.size() < 7) continue;
        if (f[0] == "Overall-auto") auto_dsc = std::stod(f[1]);
        if (f[0] == "GT") gt_acc = std::stod(f[2]);
    }

    // SVG sanity rides along: well-formed, one marker per scatter row
    const std::string svg = read_file(cv / "pooled_scatter_qi_acc.svg");
    std::size_t markers = 0, pos = 0;
    while ((pos = svg.find("<circle", pos)) != std::string::npos) {
        ++markers;
        pos += 7;
    }
    if (!xml_well_formed(svg) || markers != scatter.size()) {
        detail = "scatter svg malformed or marker count " + std::to_string(markers) +
                 " != " + std::to_string(scatter.size());
        return false;
    }

    // training-progress: per-fold loss logs are finite and end below start
    for (const char* fold : {"fold_0", "fold_1"})
        for (const char* log : {"loss_seg3d.csv", "loss_seg2d.csv", "loss_predictor.csv"}) {
            const auto lines = read_lines(cv / fold / log);
            if (lines.size() < 3) {
                detail = std::string(fold) + "/" + log + " too short";
                return false;
            }
            const double first = std::stod(split_csv(lines[1])[1]);
            const double last = std::stod(split_csv(lines.back())[1]);
            if (!std::isfinite(first) || !std::isfinite(last) || !(last < first)) {
                detail = std::string(fold) + "/" + log + ": final epoch mean " +
                         std::to_string(last) + " not below first " + std::to_string(first);
                return false;
            }
        }

    // exit codes: IO failure and usage errors are distinct and nonzero
    const int io_rc = run_cli("train --manifest " + (dir / "missing.tsv").string() +
                                  " --out " + (dir / "x1").string(),
                              dir / "rc_io.log");
    const int usage_rc = run_cli("crossval --manifest " + (data / "manifest.tsv").string() +
                                     " --tau 1.5 --out " + (dir / "x2").string(),
                                 dir / "rc_usage.log");
    if (WEXITSTATUS(io_rc) != 3 || WEXITSTATUS(usage_rc) != 2) {
        detail = "exit codes: io " + std::to_string(WEXITSTATUS(io_rc)) + " (want 3), usage " +
                 std::to_string(WEXITSTATUS(usage_rc)) + " (want 2)";
        return false;
    }

    std::ostringstream os;
    os << "PCC(QI,Acc) " << pcc << " (>= 0.8), MAE " << maev << " (<= 0.05), auto EM DSC "
       << auto_dsc << " (>= 0.4), GT Acc " << gt_acc << " (>= 0.95)";
    detail = os.str();
    return pcc >= 0.8 && maev <= 0.05 && auto_dsc >= 0.4 && gt_acc >= 0.95;
}

bool oracle_predictor_identity(std::string& detail) {
    std::vector<Scan> scans;
    PreprocessConfig prep;
    for (int i = 0; i < 3; ++i) {
        PhantomSpec spec;
        spec.dims = {16, 16, 16};
        spec.num_foreground_classes = 2;
        spec.seed = 0x0AC7 + i;
        auto [img, gt] = generate_phantom(spec);
        scans.push_back(preprocess("s" + std::to_string(i), img, gt, prep));
    }
    NetConfig net;
    net.base_channels = 2;
    TrainConfig tcfg;
    tcfg.epochs = 1;
    tcfg.steps_per_epoch = 3;
    tcfg.augment.patch3d = {12, 12, 12};
    tcfg.augment.patch2d = {1, 12, 12};
    tcfg.seed = 5;
    SegNet seg3d = train_segmentor(scans, net, tcfg, 3);
    tcfg.seed = 6;
    SegNet seg2d = train_segmentor(scans, net, tcfg, 2);
    auto records = generate_masks(seg3d, seg2d, scans);
    append_gt_records(records, scans);
    EvalReport report = evaluate(oracle_soft_maps(), records, scans, 0.5);
    const QiCorrelation corr = correlate_qi(report);
    std::ostringstream os;
    os << "PCC " << corr.pcc_qi_acc << ", MAE " << corr.mae_qi_acc << " over "
       << report.rows.size() << " masks";
    detail = os.str();
    return corr.pcc_qi_acc == 1.0 && corr.mae_qi_acc == 0.0;
}

bool determinism(std::string& detail) {
    const fs::path dir = g_work / "determinism";
    fs::create_directories(dir);
    const fs::path data = dir / "data";
    if (run_cli("phantom --n 6 --dims 16 --classes 2 --seed 9 --out " + data.string(),
                dir / "phantom.log") != 0) {
        detail = "phantom generation failed";
        return false;
    }
    const std::string common = "crossval --manifest " + (data / "manifest.tsv").string() +
                               " --k 2 --seed 9 --epochs 1 --pred-epochs 1 --steps 4 --out ";
    if (run_cli(common + (dir / "run_a").string(), dir / "a.log") != 0 ||
        run_cli(common + (dir / "run_b").string(), dir / "b.log") != 0) {
        detail = "crossval run failed";
        return false;
    }
    std::size_t compared = 0;
    for (const auto& entry : fs::recursive_directory_iterator(dir / "run_a")) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext != ".csv" && ext != ".ckpt") continue;
        const fs::path rel = fs::relative(entry.path(), dir / "run_a");
        const fs::path other = dir / "run_b" / rel;
        if (!fs::exists(other)) {
            detail = "missing in run_b: " + rel.string();
            return false;
        }
        if (read_file(entry.path()) != read_file(other)) {
            detail = "byte mismatch: " + rel.string();
            return false;
        }
        ++compared;
    }

    // the train + eval + report commands reproduce the crossval fold exactly
    const fs::path tdir = dir / "fold0_train", edir = dir / "fold0_eval",
                   rdir = dir / "fold0_report";
    if (run_cli("train --manifest " + (data / "manifest.tsv").string() +
                    " --fold 0 --k 2 --seed 9 --epochs 1 --pred-epochs 1 --steps 4 --out " +
                    tdir.string(),
                dir / "train.log") != 0) {
        detail = "train command failed";
        return false;
    }
    for (const char* ck : {"seg3d.ckpt", "seg2d.ckpt", "predictor.ckpt"})
        if (read_file(tdir / ck) != read_file(dir / "run_a" / "fold_0" / ck)) {
            detail = std::string("train checkpoint differs from crossval fold: ") + ck;
            return false;
        }
    if (run_cli("eval --checkpoints " + tdir.string() + " --out " + edir.string(),
                dir / "eval.log") != 0) {
        detail = "eval command failed";
        return false;
    }
    if (read_file(edir / "metrics.csv") != read_file(dir / "run_a" / "fold_0" / "metrics.csv")) {
        detail = "eval metrics differ from the crossval fold";
        return false;
    }
    if (run_cli("report --scatter " + (edir / "scatter.csv").string() + " --out " +
                    rdir.string(),
                dir / "report.log") != 0 ||
        !fs::exists(rdir / "summary.txt") || !fs::exists(rdir / "hist_dsc.svg")) {
        detail = "report command failed";
        return false;
    }

    detail = std::to_string(compared) +
             " csv/ckpt files byte-identical; train+eval reproduce the fold";
    return compared > 0;
}

bool io_round_trip(std::string& detail) {
    Rng rng(0xACC9);
    const fs::path dir = g_work / "io";
    fs::create_directories(dir);
    for (int t = 0; t < 100; ++t) {
        const Dims dims{1 + rng.below(6), 1 + rng.below(6), 1 + rng.below(6)};
        const fs::path p = dir / ("g" + std::to_string(t) + ".vvol");
        if (t % 2 == 0) {
            std::vector<float> data(dims.count());
            for (auto& v : data) v = static_cast<float>(rng.uniform(-1e6, 1e6));
            VoxelGrid g(dims, {rng.uniform(0.1, 5), rng.uniform(0.1, 5), rng.uniform(0.1, 5)},
                        data);
            save_grid(g, p.string());
            const std::string bytes1 = read_file(p);
            VoxelGrid back = load_image(p.string());
            if (back.data != g.data || back.dims != g.dims || back.spacing != g.spacing) {
                detail = "f32 value mismatch at trial " + std::to_string(t);
                return false;
            }
            save_grid(back, p.string());
            if (read_file(p) != bytes1) {
                detail = "f32 byte mismatch at trial " + std::to_string(t);
                return false;
            }
        } else {
            const int classes = 1 + static_cast<int>(rng.below(6));
            std::vector<std::uint8_t> labels(dims.count());
            for (auto& v : labels) v = static_cast<std::uint8_t>(rng.below(classes + 1));
            LabelMask m(dims, {1, 1, 1}, labels, classes);
            save_grid(m, p.string());
            const std::string bytes1 = read_file(p);
            LabelMask back = load_labels(p.string());
            if (back.labels != m.labels || back.num_classes != m.num_classes) {
                detail = "u8 value mismatch at trial " + std::to_string(t);
                return false;
            }
            save_grid(back, p.string());
            if (read_file(p) != bytes1) {
                detail = "u8 byte mismatch at trial " + std::to_string(t);
                return false;
            }
        }
    }
    detail = "100 grids bit-exact";
    return true;
}

} // namespace

int main(int argc, char** argv) {
    int only = -1;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--cli" && i + 1 < argc) g_cli = argv[++i];
        if (arg == "--only" && i + 1 < argc) only = std::atoi(argv[++i]);
    }
    if (g_cli.empty()) {
        // default: sibling binary from the same build tree
        const fs::path guess = fs::path(argv[0]).parent_path().parent_path() / "tools" / "voxqa";
        g_cli = guess.string();
    }
    g_work = fs::temp_directory_path() /
             ("voxqa_acceptance_" + std::to_string(static_cast<unsigned>(::getpid())));
    fs::create_directories(g_work);

    struct Criterion {
        const char* name;
        double budget_s;
        std::function<bool(std::string&)> fn;
    };
    const std::vector<Criterion> criteria = {
        {"metric-oracle-equivalence", 10, metric_oracle_equivalence},
        {"eq1-qi-identity", 5, qi_identity},
        {"gradient-correctness", 60, gradient_correctness},
        {"adjoint-identity", 60, adjoint_identity},
        {"overfit-sanity", 300, overfit_sanity},
        {"desk-scale-end-to-end", 1800, desk_scale_end_to_end},
        {"oracle-predictor-identity", 60, oracle_predictor_identity},
        {"crossval-determinism", 600, determinism},
        {"io-round-trip", 10, io_round_trip},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (only >= 0 && static_cast<std::size_t>(only) != i) continue;
        const auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = criteria[i].fn(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double dt = seconds_since(t0);
        if (dt > criteria[i].budget_s) {
            ok = false;
            detail += " [over budget " + std::to_string(criteria[i].budget_s) + "s]";
        }
        std::printf("[%s] %-26s (%7.2fs) %s\n", ok ? "PASS" : "FAIL", criteria[i].name, dt,
                    detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }

    if (failures == 0) {
        std::error_code ec;
        fs::remove_all(g_work, ec);
    } else {
        std::printf("work dir kept for inspection: %s\n", g_work.string().c_str());
    }
    return failures == 0 ? 0 : 1;
}
