#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "drml/datasets.hpp"
#include "drml/diagnostics.hpp"
#include "drml/episodic.hpp"
#include "drml/formulations.hpp"
#include "drml/surface.hpp"

namespace py = pybind11;
using namespace drml;

PYBIND11_MODULE(_drml, m) {
    m.doc() = "Metric-learning laboratory: softmax vs distance-ratio heads";

    py::enum_<HeadKind>(m, "HeadKind")
        .value("SoftmaxSq", HeadKind::SoftmaxSq)
        .value("DR", HeadKind::DR)
        .value("CosNormFace", HeadKind::CosNormFace)
        .value("CosSphereFace", HeadKind::CosSphereFace)
        .value("CosCosFace", HeadKind::CosCosFace)
        .value("CosArcFace", HeadKind::CosArcFace)
        .value("AngSoftmax", HeadKind::AngSoftmax)
        .value("AngDR", HeadKind::AngDR);

    py::class_<Head>(m, "Head")
        .def(py::init<>())
        .def_readwrite("kind", &Head::kind)
        .def_readwrite("log_rho", &Head::log_rho)
        .def_readwrite("scale_s", &Head::scale_s)
        .def_readwrite("margin_m", &Head::margin_m)
        .def("rho", &Head::rho);

    py::class_<ConfidenceVector>(m, "ConfidenceVector")
        .def_readonly("probs", &ConfidenceVector::probs)
        .def_readonly("class_order", &ConfidenceVector::class_order);

    m.def("euclidean_distance", &euclidean_distance);
    m.def("angular_distance", &angular_distance);
    m.def("geometric_mean", &geometric_mean);
    m.def("softmax_confidences", &softmax_confidences);
    m.def("dr_confidences", &dr_confidences);
    m.def("cross_entropy", &cross_entropy);
    m.def("cosine_confidences", &cosine_confidences);
    m.def("angular_confidences", &angular_confidences);

    m.def("mann_whitney_u", [](const std::vector<double>& a,
                               const std::vector<double>& b) {
        const MannWhitneyResult r = mann_whitney_u(a, b);
        return py::make_tuple(r.u, r.p_value);
    });
    m.def("fisher_exact", &fisher_exact);

    m.def(
        "estimate_alpha",
        [](const std::vector<Vec>& x_origin, const std::vector<Vec>& x_new) {
            return estimate_alpha(Mat{x_origin}, Mat{x_new});
        });
    m.def("norm_ratio",
          [](const std::vector<Vec>& x_origin, const std::vector<Vec>& x_new)
              -> py::object {
              const auto phi = norm_ratio(Mat{x_origin}, Mat{x_new});
              if (!phi) return py::none();
              return py::float_(*phi);
          });

    py::class_<SyntheticConfig>(m, "SyntheticConfig")
        .def(py::init<>())
        .def_readwrite("n_classes", &SyntheticConfig::n_classes)
        .def_readwrite("dim", &SyntheticConfig::dim)
        .def_readwrite("points_per_class", &SyntheticConfig::points_per_class)
        .def_readwrite("separation", &SyntheticConfig::separation)
        .def_readwrite("spread", &SyntheticConfig::spread);

    py::class_<Dataset>(m, "Dataset")
        .def("n_points", [](const Dataset& d) { return d.points.size(); });
    m.def("generate_synthetic", &generate_synthetic);

    py::enum_<DistanceMode>(m, "DistanceMode")
        .value("Prototype", DistanceMode::Prototype)
        .value("NearestNeighbor", DistanceMode::NearestNeighbor);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("n_way", &TrainConfig::n_way)
        .def_readwrite("k_shot", &TrainConfig::k_shot)
        .def_readwrite("n_query", &TrainConfig::n_query)
        .def_readwrite("episodes", &TrainConfig::episodes)
        .def_readwrite("lr", &TrainConfig::lr)
        .def_readwrite("head", &TrainConfig::head)
        .def_readwrite("mode", &TrainConfig::mode)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("val_episodes", &TrainConfig::val_episodes);

    py::class_<TrainLog>(m, "TrainLog")
        .def("n_checkpoints",
             [](const TrainLog& l) { return l.checkpoints.size(); })
        .def("val_accuracies", [](const TrainLog& l) {
            std::vector<double> out;
            for (const auto& row : l.checkpoints) out.push_back(row.val_acc);
            return out;
        })
        .def("csv", &train_log_csv);

    m.def("train", [](const Dataset& ds, const TrainConfig& cfg) {
        return train(ds, cfg);
    });

    m.def("compare_runs_csv", [](const TrainLog& a, const TrainLog& b) {
        return comparison_csv(compare_runs(a, b));
    });

    py::class_<ExtremaReport>(m, "ExtremaReport")
        .def_readonly("argmax", &ExtremaReport::argmax)
        .def_readonly("max_value", &ExtremaReport::max_value)
        .def_readonly("argmin", &ExtremaReport::argmin)
        .def_readonly("min_value", &ExtremaReport::min_value)
        .def_readonly("flat", &ExtremaReport::flat);

    m.def("sphere_extrema",
          [](const std::vector<Vec>& class_vectors, const Head& head, int target,
             std::size_t resolution, std::size_t refine_steps) {
              return find_extrema(
                  sphere_grid(class_vectors, head, target, resolution),
                  refine_steps);
          });
    m.def("plane_extrema",
          [](const std::vector<Vec>& prototypes, const Head& head, int target,
             std::size_t resolution, std::size_t refine_steps) {
              return find_extrema(
                  plane_grid(prototypes, head, target,
                             default_plane_bounds(prototypes), resolution),
                  refine_steps);
          });
}
