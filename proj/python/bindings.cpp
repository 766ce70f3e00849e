#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kngd/harness.hpp"
#include "kngd/mlp.hpp"
#include "kngd/natgrad.hpp"
#include "kngd/nystrom.hpp"
#include "kngd/problems.hpp"

namespace py = pybind11;
using namespace kngd;

namespace {

MlpParams make_params(std::vector<int> widths, const Vector& theta) {
  return MlpParams(MlpArchitecture{std::move(widths)}, theta);
}

py::dict summary_dict(const RunSummary& s) {
  py::dict d;
  d["status"] = to_string(s.status);
  d["message"] = s.message;
  d["final_l2"] = s.final_l2;
  d["best_l2"] = s.best_l2;
  d["l2_relative"] = s.l2_relative;
  d["final_loss"] = s.final_loss;
  d["total_steps"] = s.total_steps;
  d["total_seconds"] = s.total_seconds;
  d["metrics_csv"] = metrics_csv(s.records);
  return d;
}

}  // namespace

PYBIND11_MODULE(_kngd, m) {
  m.doc() = "Kernel-space natural gradient optimizers for PINNs";

  m.def("num_params", [](std::vector<int> widths) { return MlpArchitecture{std::move(widths)}.num_params(); });
  m.def("init_params", [](std::vector<int> widths, std::uint64_t seed) {
    return init_params(MlpArchitecture{std::move(widths)}, seed).theta;
  }, py::arg("widths"), py::arg("seed") = 0);
  m.def("forward", [](std::vector<int> widths, const Vector& theta, const Matrix& x) {
    return forward_values(make_params(std::move(widths), theta), x);
  }, py::arg("widths"), py::arg("theta"), py::arg("x"));
  m.def("jets", [](std::vector<int> widths, const Vector& theta, const Matrix& x) {
    const JetBatch j = forward_jets(make_params(std::move(widths), theta), x, false, false);
    return py::make_tuple(j.u, j.grads, j.diag2);
  }, py::arg("widths"), py::arg("theta"), py::arg("x"),
     "Values, first and pure second derivatives along each input axis.");

  m.def("sample_batch", [](const std::string& problem, Index n_int, Index n_bnd, std::uint64_t seed) {
    Rng rng(seed);
    const Batch b = sample_batch(*make_problem(problem), rng, n_int, n_bnd);
    return py::make_tuple(b.x_int, b.x_bnd);
  }, py::arg("problem"), py::arg("n_interior"), py::arg("n_boundary"), py::arg("seed") = 0);
  m.def("residual_system", [](const std::string& problem, std::vector<int> widths, const Vector& theta,
                              Index n_int, Index n_bnd, std::uint64_t seed) {
    const ProblemPtr p = make_problem(problem);
    Rng rng(seed);
    const Batch b = sample_batch(*p, rng, n_int, n_bnd);
    const ResidualSystem sys = assemble_residual(*p, make_params(std::move(widths), theta), b);
    return py::make_tuple(sys.r, sys.J, sys.loss);
  }, py::arg("problem"), py::arg("widths"), py::arg("theta"), py::arg("n_interior"),
     py::arg("n_boundary"), py::arg("seed") = 0, "Returns (r, J, loss) for a fresh batch.");
  m.def("exact_solution", [](const std::string& problem, const Matrix& x) {
    const ProblemPtr p = make_problem(problem);
    Vector out(x.rows());
    for (Index i = 0; i < x.rows(); ++i) {
      const Vector row = x.row(i).transpose();
      out(i) = p->exact_solution({row.data(), static_cast<std::size_t>(row.size())});
    }
    return out;
  });

  m.def("engdw_direction", &engdw_direction, py::arg("J"), py::arg("r"), py::arg("damping"));
  m.def("bias_correction", &bias_correction, py::arg("mu"), py::arg("k"));
  m.def("constrained_step", &constrained_step, py::arg("eta"), py::arg("phi"), py::arg("C"));
  m.def("line_search", [](const std::function<double(const Vector&)>& loss_at, const Vector& theta,
                          const Vector& phi) {
    const LineSearchResult res = line_search(loss_at, theta, phi);
    return py::make_tuple(res.eta, res.loss, res.stalled);
  }, py::arg("loss_at"), py::arg("theta"), py::arg("phi"));

  py::class_<OptimizerState>(m, "SpringState")
      .def(py::init([](Index num_params, double mu, double lambda) {
        return OptimizerState::init(num_params, mu, lambda);
      }), py::arg("num_params"), py::arg("mu"), py::arg("damping"))
      .def_readonly("phi_prev", &OptimizerState::phi_prev)
      .def_readonly("k", &OptimizerState::k)
      .def("step", [](OptimizerState& s, const Matrix& J, const Vector& r) { return spring_step(s, J, r).phi; });

  py::class_<NystromApprox>(m, "NystromApprox")
      .def_readonly("B", &NystromApprox::B)
      .def_readonly("L", &NystromApprox::L)
      .def_readonly("nu", &NystromApprox::nu)
      .def("dense", &NystromApprox::dense)
      .def("inv_apply", [](const NystromApprox& a, const Vector& v) { return nystrom_inv_apply(a, v); });
  py::class_<StableNystrom>(m, "StableNystrom")
      .def_readonly("U", &StableNystrom::U)
      .def_readonly("eigenvalues", &StableNystrom::eigenvalues)
      .def("dense", &StableNystrom::dense)
      .def("inv_apply", &StableNystrom::inv_apply, py::arg("v"), py::arg("damping"));

  m.def("nystrom", [](const Matrix& A, const Matrix& omega, double lambda) {
    return nystrom_gpu_efficient([&A](const Matrix& b) -> Matrix { return A * b; }, omega, lambda);
  }, py::arg("A"), py::arg("omega"), py::arg("damping"));
  m.def("nystrom_stable", [](const Matrix& A, const Matrix& omega) { return nystrom_stable(A, omega); },
        py::arg("A"), py::arg("omega"));
  m.def("projector_distance", &projector_distance);
  m.def("effective_dimension", [](const Matrix& K, double lambda) {
    return effective_dimension(kernel_spectrum(K), lambda);
  }, py::arg("K"), py::arg("damping"));

  m.def("run", [](const std::map<std::string, std::string>& config, const std::string& out_dir) {
    const RunConfig cfg = RunConfig::from_map(config);
    RunSummary s;
    {
      py::gil_scoped_release release;
      s = run_experiment(cfg, out_dir);
    }
    return summary_dict(s);
  }, py::arg("config"), py::arg("out_dir") = "", "Train from flat 'section.key' settings.");
  m.def("bench_nystrom", [](Index n, std::vector<double> fracs, int reps, int warmup) {
    BenchOptions opts;
    opts.n = n;
    opts.sketch_fracs = std::move(fracs);
    opts.reps = reps;
    opts.warmup = warmup;
    return bench_csv(bench_nystrom(opts));
  }, py::arg("n"), py::arg("fracs"), py::arg("reps") = 1, py::arg("warmup") = 0);
  m.attr("METRICS_HEADER") = kMetricsHeader;
  m.attr("__version__") = build_id();
}
