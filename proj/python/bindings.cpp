// Python bindings for the main operations: volume types and IO, the
// preprocessing chain, metrics, error maps / QI, phantom generation,
// training and the evaluation pipeline. Volumes cross the boundary as
// numpy arrays shaped (d, h, w).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "voxqa/checkpoint.hpp"
#include "voxqa/pipeline.hpp"
#include "voxqa/reporting.hpp"

namespace py = pybind11;
using namespace voxqa;

namespace {

Spacing to_spacing(const std::tuple<double, double, double>& s) {
    return {std::get<0>(s), std::get<1>(s), std::get<2>(s)};
}

std::tuple<double, double, double> from_spacing(const Spacing& s) {
    return {s.sx, s.sy, s.sz};
}

VoxelGrid grid_from_array(py::array_t<float, py::array::c_style | py::array::forcecast> a,
                          std::tuple<double, double, double> spacing) {
    if (a.ndim() != 3) throw ShapeError("image array must have shape (d,h,w)");
    const Dims dims{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                    static_cast<std::size_t>(a.shape(2))};
    std::vector<float> data(a.data(), a.data() + dims.count());
    return VoxelGrid(dims, to_spacing(spacing), std::move(data));
}

LabelMask mask_from_array(py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> a,
                          int num_classes, std::tuple<double, double, double> spacing) {
    if (a.ndim() != 3) throw ShapeError("label array must have shape (d,h,w)");
    const Dims dims{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                    static_cast<std::size_t>(a.shape(2))};
    std::vector<std::uint8_t> labels(a.data(), a.data() + dims.count());
    return LabelMask(dims, to_spacing(spacing), std::move(labels), num_classes);
}

template <typename T>
py::array_t<T> volume_array(const Dims& dims, const std::vector<T>& data) {
    py::array_t<T> out({dims.d, dims.h, dims.w});
    std::copy(data.begin(), data.end(), out.mutable_data());
    return out;
}

py::dict row_dict(const EvalRow& r) {
    py::dict d;
    d["scan"] = r.scan_id;
    d["mask_type"] = mask_type_name(r.source, r.head);
    d["head_code"] = head_code(r.head);
    d["dsc"] = r.dsc;
    d["acc"] = r.acc;
    d["prec"] = r.prec;
    d["recl"] = r.recl;
    d["seg_dsc"] = r.seg_dsc;
    d["seg_acc"] = r.seg_acc;
    d["qi"] = r.qi;
    return d;
}

py::dict report_dict(const EvalReport& rep) {
    py::list rows, groups;
    for (const auto& r : rep.rows) rows.append(row_dict(r));
    for (const auto& g : rep.groups) {
        py::dict d;
        d["mask_type"] = g.mask_type;
        d["n"] = g.n;
        d["dsc"] = g.dsc;
        d["acc"] = g.acc;
        d["prec"] = g.prec;
        d["recl"] = g.recl;
        d["seg_dsc"] = g.seg_dsc;
        d["seg_acc"] = g.seg_acc;
        groups.append(d);
    }
    py::dict out;
    out["rows"] = rows;
    out["groups"] = groups;
    if (rep.corr) {
        py::dict c;
        c["pcc_qi_acc"] = rep.corr->pcc_qi_acc;
        c["pcc_qi_dsc"] = rep.corr->pcc_qi_dsc;
        c["mae_qi_acc"] = rep.corr->mae_qi_acc;
        out["corr"] = c;
    }
    return out;
}

TrainConfig make_train_config(std::size_t epochs, std::size_t steps, std::size_t batch,
                              double lr, std::uint64_t seed, std::size_t patch,
                              const std::string& optimizer) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.steps_per_epoch = steps;
    cfg.batch_size = batch;
    cfg.learning_rate = static_cast<float>(lr);
    cfg.seed = seed;
    cfg.optimizer = optimizer;
    cfg.augment.patch3d = {patch, patch, patch};
    cfg.augment.patch2d = {1, patch, patch};
    return cfg;
}

NetConfig make_net_config(std::size_t base_channels, std::size_t blocks) {
    NetConfig cfg;
    cfg.base_channels = base_channels;
    cfg.blocks_per_stage = blocks;
    return cfg;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Volumetric segmentation error-map prediction and quality assessment";
    m.attr("__version__") = "0.1.0";

    py::register_exception<IoError>(m, "IoError", PyExc_IOError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ValueError>(m, "ValueError", PyExc_ValueError);
    py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

    py::class_<VoxelGrid>(m, "VoxelGrid")
        .def(py::init(&grid_from_array), py::arg("array"),
             py::arg("spacing") = std::make_tuple(1.0, 1.0, 1.0))
        .def_property_readonly("array",
                               [](const VoxelGrid& g) { return volume_array(g.dims, g.data); })
        .def_property_readonly("spacing",
                               [](const VoxelGrid& g) { return from_spacing(g.spacing); })
        .def_property_readonly(
            "dims", [](const VoxelGrid& g) { return std::make_tuple(g.dims.d, g.dims.h,
                                                                    g.dims.w); })
        .def("__repr__", [](const VoxelGrid& g) {
            return "VoxelGrid(" + g.dims.str() + ")";
        });

    py::class_<LabelMask>(m, "LabelMask")
        .def(py::init(&mask_from_array), py::arg("array"), py::arg("num_classes"),
             py::arg("spacing") = std::make_tuple(1.0, 1.0, 1.0))
        .def_property_readonly(
            "array", [](const LabelMask& g) { return volume_array(g.dims, g.labels); })
        .def_property_readonly("spacing",
                               [](const LabelMask& g) { return from_spacing(g.spacing); })
        .def_property_readonly("num_classes",
                               [](const LabelMask& g) { return g.num_classes; })
        .def_property_readonly(
            "dims", [](const LabelMask& g) { return std::make_tuple(g.dims.d, g.dims.h,
                                                                    g.dims.w); })
        .def("__repr__", [](const LabelMask& g) {
            return "LabelMask(" + g.dims.str() + ", C=" + std::to_string(g.num_classes) + ")";
        });

    py::class_<ErrorMap>(m, "ErrorMap")
        .def_property_readonly("array",
                               [](const ErrorMap& e) { return volume_array(e.dims, e.bits); })
        .def_property_readonly("error_fraction", &ErrorMap::error_fraction);

    py::class_<SoftErrorMap>(m, "SoftErrorMap").def_property_readonly("array", [](const SoftErrorMap& e) {
        return volume_array(e.dims, e.probs);
    });

    py::class_<Scan>(m, "Scan")
        .def_property_readonly("id", [](const Scan& s) { return s.id; })
        .def_property_readonly("image", [](const Scan& s) { return s.image; })
        .def_property_readonly("gt", [](const Scan& s) { return s.gt; });

    py::class_<MaskRecord>(m, "MaskRecord")
        .def_property_readonly("scan_id", [](const MaskRecord& r) { return r.scan_id; })
        .def_property_readonly("mask_type",
                               [](const MaskRecord& r) {
                                   return mask_type_name(r.source, r.head);
                               })
        .def_property_readonly("mask", [](const MaskRecord& r) { return r.mask; });

    py::class_<SegNet>(m, "SegNet")
        .def_property_readonly("trainable_count", &SegNet::trainable_count)
        .def("save", [](const SegNet& net, const std::string& path) {
            save_checkpoint(net.params(), path);
        })
        .def("load", [](SegNet& net, const std::string& path) {
            load_checkpoint(net.params(), path);
        });

    // volume IO and preprocessing
    m.def("load_image", &load_image, py::arg("path"));
    m.def("load_labels", &load_labels, py::arg("path"));
    m.def("save_grid", py::overload_cast<const VoxelGrid&, const std::string&>(&save_grid),
          py::arg("grid"), py::arg("path"));
    m.def("save_grid", py::overload_cast<const LabelMask&, const std::string&>(&save_grid),
          py::arg("mask"), py::arg("path"));
    m.def(
        "resample_isotropic",
        [](const VoxelGrid& g, double t, const std::string& mode) {
            return resample_isotropic(g, t,
                                      mode == "nearest" ? Interp::Nearest : Interp::Trilinear);
        },
        py::arg("grid"), py::arg("target_spacing"), py::arg("mode") = "trilinear");
    m.def(
        "resample_isotropic_labels",
        [](const LabelMask& g, double t) { return resample_isotropic(g, t); },
        py::arg("mask"), py::arg("target_spacing"));
    m.def("normalize_intensity", &normalize_intensity, py::arg("grid"));
    m.def(
        "roi_from_mask",
        [](const LabelMask& gt, std::size_t margin) {
            const BoundingBox b = roi_from_mask(gt, margin);
            return std::make_pair(std::make_tuple(b.lo[0], b.lo[1], b.lo[2]),
                                  std::make_tuple(b.hi[0], b.hi[1], b.hi[2]));
        },
        py::arg("gt"), py::arg("margin") = 8);
    m.def(
        "one_hot",
        [](const LabelMask& mask) {
            auto t = one_hot(mask);
            py::array_t<float> out(
                {static_cast<std::size_t>(mask.num_classes) + 1, mask.dims.d, mask.dims.h,
                 mask.dims.w});
            std::copy(t.values().begin(), t.values().end(), out.mutable_data());
            return out;
        },
        py::arg("mask"));
    m.def("preprocess",
          [](const std::string& id, const VoxelGrid& img, const LabelMask& gt, double spacing,
             std::size_t margin) {
              PreprocessConfig cfg;
              cfg.target_spacing = spacing;
              cfg.roi_margin = margin;
              return preprocess(id, img, gt, cfg);
          },
          py::arg("id"), py::arg("image"), py::arg("gt"), py::arg("target_spacing") = 2.0,
          py::arg("roi_margin") = 8);

    // metrics
    m.def("dice_multiclass", [](const LabelMask& mask, const LabelMask& gt) {
        const MulticlassDice d = dice_multiclass(mask, gt);
        return std::make_pair(d.per_class, d.mean);
    });
    m.def("pearson", [](const std::vector<double>& xs, const std::vector<double>& ys) {
        return pearson(xs, ys);
    });
    m.def("mae", [](const std::vector<double>& xs, const std::vector<double>& ys) {
        return mae(xs, ys);
    });
    m.def("histogram",
          [](const std::vector<double>& values, const std::vector<double>& edges) {
              return histogram(values, edges);
          });
    m.def("error_map_metrics", [](const ErrorMap& pred, const ErrorMap& truth) {
        const ConfusionCounts c = confusion(pred.bits, truth.bits);
        const AccPrecRecl apr = acc_prec_recl(c);
        py::dict d;
        d["dsc"] = dice_binary(c);
        d["acc"] = apr.acc;
        d["prec"] = apr.prec;
        d["recl"] = apr.recl;
        return d;
    });

    // error maps and QI
    m.def("true_error_map", &true_error_map, py::arg("mask"), py::arg("gt"));
    m.def("binarize", &binarize, py::arg("soft"), py::arg("tau") = 0.5);
    m.def("quality_indicator", &quality_indicator, py::arg("error_map"));
    m.def("qi_from_truth", &qi_from_truth, py::arg("mask"), py::arg("gt"));

    // phantoms and splits
    m.def(
        "generate_phantom",
        [](std::tuple<std::size_t, std::size_t, std::size_t> dims, int classes, double noise,
           double bias, std::uint64_t seed, std::tuple<double, double, double> spacing) {
            PhantomSpec spec;
            spec.dims = {std::get<0>(dims), std::get<1>(dims), std::get<2>(dims)};
            spec.num_foreground_classes = classes;
            spec.noise_sigma = noise;
            spec.bias_amplitude = bias;
            spec.seed = seed;
            spec.spacing = to_spacing(spacing);
            return generate_phantom(spec);
        },
        py::arg("dims") = std::make_tuple(32, 32, 32), py::arg("classes") = 3,
        py::arg("noise") = 0.05, py::arg("bias") = 0.10, py::arg("seed") = 0,
        py::arg("spacing") = std::make_tuple(2.0, 2.0, 2.0));
    m.def(
        "kfold_split",
        [](const std::vector<std::string>& ids, std::size_t k, std::uint64_t seed) {
            std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> out;
            for (const auto& f : kfold_split(ids, k, seed))
                out.emplace_back(f.train_ids, f.test_ids);
            return out;
        },
        py::arg("ids"), py::arg("k"), py::arg("seed") = 0);

    // training and evaluation
    m.def(
        "train_segmentor",
        [](const std::vector<Scan>& scans, int rank, std::size_t epochs, std::size_t steps,
           std::size_t batch, double lr, std::uint64_t seed, std::size_t patch,
           std::size_t base_channels, std::size_t blocks, const std::string& optimizer) {
            return train_segmentor(scans, make_net_config(base_channels, blocks),
                                   make_train_config(epochs, steps, batch, lr, seed, patch,
                                                     optimizer),
                                   rank);
        },
        py::arg("scans"), py::arg("rank") = 3, py::arg("epochs") = 1, py::arg("steps") = 40,
        py::arg("batch") = 1, py::arg("lr") = 2e-3, py::arg("seed") = 0, py::arg("patch") = 24,
        py::arg("base_channels") = 8, py::arg("blocks") = 1, py::arg("optimizer") = "adam");
    m.def(
        "train_predictor",
        [](SegNet& seg3d, SegNet& seg2d, const std::vector<Scan>& scans, std::size_t epochs,
           std::size_t steps, std::size_t batch, double lr, std::uint64_t seed,
           std::size_t patch, std::size_t base_channels, std::size_t blocks,
           const std::string& optimizer) {
            return train_predictor(seg3d, seg2d, scans,
                                   make_net_config(base_channels, blocks),
                                   make_train_config(epochs, steps, batch, lr, seed, patch,
                                                     optimizer));
        },
        py::arg("seg3d"), py::arg("seg2d"), py::arg("scans"), py::arg("epochs") = 1,
        py::arg("steps") = 40, py::arg("batch") = 1, py::arg("lr") = 2e-3, py::arg("seed") = 0,
        py::arg("patch") = 24, py::arg("base_channels") = 8, py::arg("blocks") = 1,
        py::arg("optimizer") = "adam");
    m.def("generate_masks", &generate_masks, py::arg("seg3d"), py::arg("seg2d"),
          py::arg("scans"));
    m.def(
        "predict_error_map",
        [](SegNet& predictor, const VoxelGrid& image, const LabelMask& mask, double tau) {
            const Prediction p = predict_error_map(predictor, image, mask, tau);
            return std::make_tuple(p.soft, p.binary, p.qi);
        },
        py::arg("predictor"), py::arg("image"), py::arg("mask"), py::arg("tau") = 0.5);
    m.def(
        "evaluate_with_predictor",
        [](SegNet& predictor, std::vector<MaskRecord> records, const std::vector<Scan>& scans,
           double tau, bool with_gt) {
            if (with_gt) append_gt_records(records, scans);
            EvalReport rep = evaluate(model_soft_maps(predictor), records, scans, tau);
            rep.corr = correlate_qi(rep);
            return report_dict(rep);
        },
        py::arg("predictor"), py::arg("records"), py::arg("scans"), py::arg("tau") = 0.5,
        py::arg("with_gt") = true);
    m.def(
        "evaluate_with_oracle",
        [](std::vector<MaskRecord> records, const std::vector<Scan>& scans, double tau,
           bool with_gt) {
            if (with_gt) append_gt_records(records, scans);
            EvalReport rep = evaluate(oracle_soft_maps(), records, scans, tau);
            rep.corr = correlate_qi(rep);
            return report_dict(rep);
        },
        py::arg("records"), py::arg("scans"), py::arg("tau") = 0.5, py::arg("with_gt") = true);
}
