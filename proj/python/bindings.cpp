#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "raftlab/checkpoint.hpp"
#include "raftlab/config.hpp"
#include "raftlab/error.hpp"
#include "raftlab/eval.hpp"
#include "raftlab/losses.hpp"
#include "raftlab/train.hpp"
#include "raftlab/verify.hpp"
#include "raftlab/version.hpp"

namespace py = pybind11;
using namespace raftlab;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-d array");
    const auto r = static_cast<std::size_t>(a.shape(0));
    const auto c = static_cast<std::size_t>(a.shape(1));
    return Tensor::matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const Tensor& t) {
    Array out({t.rows(), t.cols()});
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

double loss_value(Var (*f)(const Var&, const Var&), const Array& a, const Array& b) {
    Tape tape;
    return f(tape.constant(to_tensor(a)), tape.constant(to_tensor(b))).value().item();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Mean-teacher self-supervised learning: losses, training and verification";
    m.attr("__version__") = kVersion;

    static py::exception<Error> error(m, "RaftlabError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(error, e.what());
        }
    });

    m.def("make_blobs",
          [](std::size_t dim, std::size_t classes, std::size_t per_class, std::uint64_t seed, double noise) {
              const Dataset ds = make_blobs(BlobsSpec{dim, classes, per_class, seed, noise});
              return py::make_tuple(to_array(ds.samples), ds.labels);
          },
          py::arg("dim") = 8, py::arg("classes") = 4, py::arg("per_class") = 100, py::arg("seed") = 0,
          py::arg("noise") = 0.5);

    m.def("align_loss", [](const Array& p1, const Array& p2) { return loss_value(align_loss, p1, p2); });
    m.def("cross_model_loss",
          [](const Array& p, const Array& zbar) { return loss_value(cross_model_loss, p, zbar); });
    m.def("uniform_loss",
          [](const Array& z, double t) {
              Tape tape;
              return uniform_loss(tape.constant(to_tensor(z)), t).value().item();
          },
          py::arg("z"), py::arg("t") = 2.0);

    m.def("resolve_config", [](const std::string& text) { return to_json(parse_run_config(text)); },
          "Parse a JSON run configuration and return it with every field filled in.");

    m.def("train",
          [](const std::string& config, std::optional<std::string> out_dir) {
              const RunConfig cfg = parse_run_config(config);
              const Dataset ds = load_dataset(cfg.data);
              TrainOptions opts;
              if (out_dir) opts.out_dir = *out_dir;
              TrainResult r;
              {
                  py::gil_scoped_release release;
                  r = train_run(cfg.train, ds, opts);
              }
              std::vector<std::string> lines;
              for (const auto& rec : r.log) lines.push_back(to_json_line(rec));
              std::vector<std::string> ckpts;
              for (const auto& c : r.checkpoints) ckpts.push_back(c.string());
              return py::make_tuple(lines, ckpts, checksum(r.params));
          },
          py::arg("config") = "{}", py::arg("out_dir") = py::none());

    m.def("evaluate",
          [](const std::string& checkpoint, const std::string& config) {
              const RunConfig cfg = parse_run_config(config);
              const ModelParams params = load_checkpoint(checkpoint);
              const Dataset ds = load_dataset(cfg.data);
              return to_json(metrics_report(params, ds, cfg.train.augmentation(), cfg.eval_samples,
                                            cfg.train.loss.t, cfg.probe));
          },
          py::arg("checkpoint"), py::arg("config") = "{}");

    m.def("upper_bound_sweep",
          [](std::size_t trials, bool symmetrize, std::uint64_t seed) {
              UpperBoundSweepConfig c;
              c.trials = trials;
              c.symmetrize = symmetrize;
              c.seed = seed;
              return to_json(upper_bound_sweep(c));
          },
          py::arg("trials") = 1000, py::arg("symmetrize") = true, py::arg("seed") = 0);

    m.def("gradient_correspondence",
          [](std::size_t trials, std::uint64_t seed) {
              CorrespondenceTrialsConfig c;
              c.trials = trials;
              c.seed = seed;
              return to_json(gradient_correspondence_trials(c));
          },
          py::arg("trials") = 100, py::arg("seed") = 0);

    m.def("trajectory_correspondence",
          [](std::uint64_t steps, const std::string& predictor, const std::string& optimizer, std::uint64_t seed) {
              TrajectoryConfig c;
              c.steps = steps;
              c.network.predictor = predictor_kind_from_string(predictor);
              c.optimizer = optimizer_kind_from_string(optimizer);
              c.seed = seed;
              return to_json(trajectory_correspondence_experiment(c));
          },
          py::arg("steps") = 200, py::arg("predictor") = "linear", py::arg("optimizer") = "sgd",
          py::arg("seed") = 0);

    m.def("sylvester_null_space",
          [](const Array& w, const Array& a, const Array& b, double pivot_tol) {
              return to_json(sylvester_null_space(to_tensor(w), to_tensor(a), to_tensor(b), pivot_tol));
          },
          py::arg("w"), py::arg("a"), py::arg("b"), py::arg("pivot_tol") = 1e-10);

    m.def("tangential_trick",
          [](std::size_t trials, std::uint64_t seed) {
              TangentialTrickConfig c;
              c.trials = trials;
              c.seed = seed;
              return to_json(tangential_trick_trials(c));
          },
          py::arg("trials") = 100, py::arg("seed") = 0);
}
