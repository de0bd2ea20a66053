#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "pdeopt/config.hpp"
#include "pdeopt/constraints.hpp"
#include "pdeopt/demos/constrained_control.hpp"
#include "pdeopt/demos/poisson_control.hpp"
#include "pdeopt/demos/shape_poisson.hpp"
#include "pdeopt/demos/spacemapping_flow.hpp"
#include "pdeopt/demos/spacemapping_semilinear.hpp"
#include "pdeopt/demos/topopt_source.hpp"
#include "pdeopt/errors.hpp"
#include "pdeopt/linesearch.hpp"
#include "pdeopt/optimize.hpp"
#include "pdeopt/reduced_problem.hpp"
#include "pdeopt/shapeopt.hpp"
#include "pdeopt/spacemapping.hpp"
#include "pdeopt/topopt.hpp"
#include "pdeopt/vtk.hpp"

namespace pdeopt::cli {

enum ExitCode { ok = 0, config_error = 1, solver_failure = 2 };

/// Pass threshold of gradient-check on the best step of the sweep.
inline constexpr double gradient_check_tolerance = 1e-5;

struct Common {
  std::string problem;
  std::filesystem::path output_dir;
  bool vtk = false;
  std::uint64_t seed = 1;
};

/// Prepared command: everything validated, nothing solved yet.
using Task = std::function<int(std::ostream& out)>;

struct Prepared {
  Task run;
  Task check;  ///< empty when the problem has no gradient check
};

struct Entry {
  std::string name;
  std::string description;
  std::function<Prepared(config::Document&, const Common&)> prepare;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string brief(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

/// history.csv: header line, then one line per record.
class Csv {
public:
  explicit Csv(std::string header) : text_(std::move(header) + "\n") {}
  void row(const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) text_ += (i ? "," : "") + num(values[i]);
    text_ += "\n";
  }
  void write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream os(dir / "history.csv", std::ios::binary);
    if (!os) throw Error("cannot write " + (dir / "history.csv").string());
    os << text_;
  }

private:
  std::string text_;
};

inline std::string vtk_name(const std::string& stem, std::size_t iter) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu.vtk", stem.c_str(), iter);
  return buf;
}

inline linesearch::Config read_linesearch(config::Document& doc) {
  linesearch::Config ls;
  ls.method = doc.get_choice("linesearch.method", "armijo", {"armijo", "polynomial"}) == "armijo"
                  ? linesearch::Method::armijo
                  : linesearch::Method::polynomial;
  ls.c1 = doc.get_double("linesearch.c1", ls.c1);
  ls.shrink = doc.get_double("linesearch.shrink", ls.shrink);
  ls.alpha0 = doc.get_double("linesearch.alpha0", ls.alpha0);
  ls.max_trials = doc.get_size("linesearch.max_trials", ls.max_trials);
  ls.low = doc.get_double("linesearch.low", ls.low);
  ls.high = doc.get_double("linesearch.high", ls.high);
  return ls;
}

inline optimize::Config read_optimizer(config::Document& doc, optimize::Config c = {}) {
  const std::string alg = doc.get_choice("optimizer.algorithm",
                                         c.algorithm == optimize::Algorithm::lbfgs      ? "lbfgs"
                                         : c.algorithm == optimize::Algorithm::ncg      ? "ncg"
                                                                                        : "steepest",
                                         {"steepest", "ncg", "lbfgs"});
  c.algorithm = alg == "lbfgs" ? optimize::Algorithm::lbfgs
                : alg == "ncg" ? optimize::Algorithm::ncg
                               : optimize::Algorithm::steepest;
  c.rtol = doc.get_double("optimizer.rtol", c.rtol);
  c.atol = doc.get_double("optimizer.atol", c.atol);
  c.max_iter = doc.get_size("optimizer.max_iter", c.max_iter);
  c.lbfgs_memory = doc.get_size("optimizer.memory", c.lbfgs_memory);
  c.linesearch = read_linesearch(doc);
  return c;
}

inline Vector seeded_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector v(n);
  for (double& x : v) x = u(rng);
  return v;
}

inline void print_sweep(std::ostream& out, const std::string& label, const GradientCheck& c) {
  out << label << ": directional derivative " << num(c.directional_derivative) << "\n";
  for (const auto& s : c.sweep) out << "  step " << brief(s.step) << "  relative error " << num(s.relative_error) << "\n";
  out << "  best " << num(c.best) << "\n";
}

inline int check_verdict(std::ostream& out, double worst_best) {
  const bool pass = worst_best <= gradient_check_tolerance;
  out << "gradient-check " << (pass ? "PASS" : "FAIL") << " (best error " << num(worst_best) << ", tolerance "
      << brief(gradient_check_tolerance) << ")\n";
  return pass ? ok : solver_failure;
}

/// Shape problem whose derivative is scaled (negative-control hook).
class ScaledShapeProblem : public shape::ShapeProblem {
public:
  ScaledShapeProblem(std::shared_ptr<const shape::ShapeProblem> base, double factor)
      : base_(std::move(base)), factor_(factor) {}
  std::shared_ptr<const DiscreteProblem> state_problem(const Mesh2D& mesh) const override {
    return base_->state_problem(mesh);
  }
  shape::ShapeDerivative shape_derivative(const Mesh2D& mesh, std::span<const double> y,
                                          std::span<const double> adjoint) const override {
    auto d = base_->shape_derivative(mesh, y, adjoint);
    for (auto& v : d) v = factor_ * v;
    return d;
  }

private:
  std::shared_ptr<const shape::ShapeProblem> base_;
  double factor_;
};

// ---------------------------------------------------------------- problems

inline Prepared poisson_control(config::Document& doc, const Common& common) {
  demos::PoissonControlParams params;
  params.resolution = doc.get_size("mesh.resolution", params.resolution);
  params.alpha = doc.get_double("problem.alpha", params.alpha);
  params.cubic = doc.get_double("problem.cubic", params.cubic);
  const double corrupt = doc.get_double("check.corrupt_gradient", 1.0);
  optimize::Config opt = read_optimizer(doc);
  opt.validate();
  if (params.resolution == 0) throw ConfigError("mesh.resolution", "must be positive");

  auto make = [params, corrupt] {
    auto prob = std::make_shared<const demos::PoissonControlProblem>(params);
    auto f = std::make_shared<ReducedFunctional>(prob);
    f->corrupt_gradient_for_testing(corrupt);
    return std::make_pair(prob, f);
  };

  Prepared p;
  p.run = [=](std::ostream& out) {
    auto [prob, f] = make();
    auto res = optimize::minimize(*f, Vector(prob->design_dimension(), 0.0), opt);
    Csv csv("iter,cost,grad_norm,step");
    for (const auto& r : res.history) csv.row({double(r.iter), r.cost, r.grad_norm, r.step});
    csv.write(common.output_dir);
    if (common.vtk) {
      f->value(res.q);
      vtk::write_file((common.output_dir / "solution.vtk").string(), prob->mesh(),
                      {{{"state", f->state()}, {"control", res.q}, {"target", prob->target()}}, {}, {}});
    }
    const auto& last = res.history.back();
    out << "poisson_control: " << (res.converged ? "converged" : "not converged (" + res.message + ")")
        << " iterations=" << res.iterations() << " cost=" << brief(last.cost)
        << " grad_norm=" << brief(last.grad_norm) << "\n";
    return res.converged ? ok : solver_failure;
  };
  p.check = [=](std::ostream& out) {
    auto [prob, f] = make();
    const Vector q = scaled(10.0, seeded_vector(prob->design_dimension(), common.seed));
    const Vector d = seeded_vector(prob->design_dimension(), common.seed + 1);
    const auto c = check_gradient(*f, q, d);
    print_sweep(out, "poisson_control reduced gradient", c);
    return check_verdict(out, c.best);
  };
  return p;
}

inline Prepared shape_poisson(config::Document& doc, const Common& common) {
  demos::ShapePoissonParams params;
  params.rings = doc.get_size("mesh.resolution", params.rings);
  const std::string product =
      doc.get_choice("problem.inner_product", "h1", {"h1", "elasticity", "p_laplace"});
  shape::ShapeGradientConfig gcfg;
  if (product == "p_laplace") gcfg = demos::shape_poisson_p_laplace();
  if (product == "elasticity") {
    gcfg.inner_product = shape::ScalarProduct::elasticity;
    gcfg.mass_shift = 1.0;
  }
  gcfg.p = doc.get_double("problem.p", gcfg.p);
  gcfg.epsilon = doc.get_double("problem.epsilon", gcfg.epsilon);
  gcfg.mass_shift = doc.get_double("problem.mass_shift", gcfg.mass_shift);
  gcfg.mu = doc.get_double("problem.mu", gcfg.mu);
  gcfg.lambda_lame = doc.get_double("problem.lambda", gcfg.lambda_lame);
  shape::Config cfg;
  cfg.quality_threshold = doc.get_double("problem.quality_threshold", cfg.quality_threshold);
  doc.get_choice("optimizer.algorithm", "steepest", {"steepest"});
  cfg.rtol = doc.get_double("optimizer.rtol", cfg.rtol);
  cfg.atol = doc.get_double("optimizer.atol", cfg.atol);
  cfg.max_iter = doc.get_size("optimizer.max_iter", cfg.max_iter);
  cfg.linesearch = read_linesearch(doc);
  const double corrupt = doc.get_double("check.corrupt_gradient", 1.0);
  gcfg.validate();
  cfg.linesearch.validate();
  if (params.rings == 0) throw ConfigError("mesh.resolution", "must be positive");

  Prepared p;
  p.run = [=](std::ostream& out) {
    const demos::PoissonShapeProblem problem;
    const Mesh2D mesh0 = demos::shape_poisson_mesh(params);
    shape::ShapeCallback cb;
    if (common.vtk) {
      std::filesystem::create_directories(common.output_dir);
      cb = [&](std::size_t iter, const Mesh2D& mesh, const shape::ShapeState& st) {
        vtk::write_file((common.output_dir / vtk_name("shape", iter)).string(), mesh, {{{"state", st.state}}, {}, {}});
      };
    }
    auto res = shape::optimize_shape(problem, mesh0, gcfg, cfg, cb);
    Csv csv("iter,cost,grad_norm,step,min_quality");
    for (const auto& r : res.history) csv.row({double(r.iter), r.cost, r.grad_norm, r.step, r.quality.value_or(0.0)});
    csv.write(common.output_dir);
    const auto& last = res.history.back();
    out << "shape_poisson: " << (res.converged ? "converged" : "not converged (" + res.message + ")")
        << " iterations=" << res.iterations() << " cost=" << brief(last.cost) << " grad_norm=" << brief(last.grad_norm)
        << " min_quality=" << brief(last.quality.value_or(0.0)) << "\n";
    return res.converged ? ok : solver_failure;
  };
  p.check = [=](std::ostream& out) {
    auto problem = std::make_shared<const demos::PoissonShapeProblem>();
    const detail::ScaledShapeProblem scaled_problem(problem, corrupt);
    const Mesh2D mesh = demos::shape_poisson_mesh(params);
    double worst = 0.0;
    for (std::uint64_t k = 0; k < 5; ++k) {
      const auto c = shape::check_shape_derivative(scaled_problem, mesh, shape::random_smooth_field(mesh, common.seed + k));
      print_sweep(out, "shape_poisson field " + std::to_string(k + 1), c);
      worst = std::max(worst, c.best);
    }
    return check_verdict(out, worst);
  };
  return p;
}

inline Prepared topopt_source(config::Document& doc, const Common& common) {
  demos::TopoptSourceParams params;
  params.resolution = doc.get_size("mesh.resolution", params.resolution);
  params.f_inside = doc.get_double("problem.f_inside", params.f_inside);
  params.f_outside = doc.get_double("problem.f_outside", params.f_outside);
  params.reference_f_inside = doc.get_double("problem.reference_f_inside", params.reference_f_inside);
  params.reference_radius = doc.get_double("problem.reference_radius", params.reference_radius);
  params.inside_negative = doc.get_bool("problem.inside_negative", params.inside_negative);
  params.interface = doc.get_choice("problem.interface", "volume_fraction", {"volume_fraction", "vertex_average"}) ==
                             "volume_fraction"
                         ? demos::TopoptSourceParams::Interface::volume_fraction
                         : demos::TopoptSourceParams::Interface::vertex_average;
  topopt::Config cfg;
  cfg.algorithm = doc.get_choice("problem.algorithm", "convex_combination", {"convex_combination", "quasi_newton"}) ==
                          "quasi_newton"
                      ? topopt::Algorithm::quasi_newton
                      : topopt::Algorithm::convex_combination;
  cfg.kappa_init = doc.get_double("problem.kappa_init", cfg.kappa_init);
  cfg.kappa_min = doc.get_double("problem.kappa_min", cfg.kappa_min);
  cfg.angle_tol_deg = doc.get_double("problem.angle_tol_deg", 5.0);
  cfg.memory = doc.get_size("problem.memory", cfg.memory);
  cfg.max_iter = doc.get_size("optimizer.max_iter", cfg.max_iter);
  cfg.validate();
  if (params.resolution == 0) throw ConfigError("mesh.resolution", "must be positive");

  Prepared p;
  p.run = [=](std::ostream& out) {
    const demos::SourceIdentificationProblem problem(params);
    auto res = topopt::run(problem, demos::topopt_initial_level_set(problem), problem.topological_derivative(), cfg);
    Csv csv("iter,cost,angle_deg,kappa,quasi_newton_step");
    for (const auto& r : res.history) csv.row({double(r.iter), r.cost, r.angle_deg, r.kappa, r.quasi_newton_step ? 1.0 : 0.0});
    csv.write(common.output_dir);
    if (common.vtk) {
      const auto st = problem.evaluate(res.psi);
      vtk::write_file((common.output_dir / "solution.vtk").string(), problem.mesh(),
                      {{{"level_set", res.psi}, {"state", st.state}, {"adjoint", st.adjoint}},
                       {},
                       {{"material", problem.layout(res.psi)}}});
    }
    const auto& last = res.history.back();
    out << "topopt_source: " << (res.converged ? "converged" : "not converged (" + res.message + ")")
        << " iterations=" << res.iterations() << " cost=" << brief(last.cost) << " angle_deg=" << brief(last.angle_deg)
        << "\n";
    return res.converged ? ok : solver_failure;
  };
  return p;
}

inline Prepared constrained_control(config::Document& doc, const Common& common) {
  demos::ConstrainedControlParams params;
  params.control.resolution = doc.get_size("mesh.resolution", params.control.resolution);
  params.control.alpha = doc.get_double("problem.alpha", 1e-2);
  params.control.cubic = doc.get_double("problem.cubic", params.control.cubic);
  params.bound = doc.get_double("problem.bound", 0.05);
  params.kind = doc.get_choice("problem.kind", "equality", {"equality", "inequality"}) == "equality"
                    ? constraints::Kind::equality
                    : constraints::Kind::inequality;
  const bool augmented = doc.get_choice("problem.method", "augmented_lagrangian",
                                        {"augmented_lagrangian", "quadratic_penalty"}) == "augmented_lagrangian";
  constraints::Config cfg;
  cfg.mu0 = doc.get_double("problem.mu0", cfg.mu0);
  cfg.growth = doc.get_double("problem.growth", cfg.growth);
  cfg.tol_feas = doc.get_double("problem.tol_feas", cfg.tol_feas);
  cfg.progress = doc.get_double("problem.progress", cfg.progress);
  cfg.max_outer = doc.get_size("problem.max_outer", cfg.max_outer);
  cfg.inner = read_optimizer(doc, cfg.inner);
  const double corrupt = doc.get_double("check.corrupt_gradient", 1.0);
  cfg.validate();
  if (params.control.resolution == 0) throw ConfigError("mesh.resolution", "must be positive");

  Prepared p;
  p.run = [=](std::ostream& out) {
    auto demo = demos::make_constrained_control(params);
    const Vector q0(demo.problem->design_dimension(), 0.0);
    auto res = augmented ? constraints::augmented_lagrangian_solve(*demo.objective, demo.constraints, q0, cfg)
                         : constraints::quadratic_penalty_solve(*demo.objective, demo.constraints, q0, cfg);
    Csv csv("iter,cost,mu,violation,inner_iterations");
    for (const auto& r : res.history) csv.row({double(r.outer), r.cost, r.mu, r.violation, double(r.inner_iterations)});
    csv.write(common.output_dir);
    if (common.vtk) {
      demo.objective->value(res.q);
      vtk::write_file((common.output_dir / "solution.vtk").string(), demo.problem->mesh(),
                      {{{"state", demo.objective->state()}, {"control", res.q}}, {}, {}});
    }
    const auto& last = res.history.back();
    out << "constrained_control: " << (res.feasible ? "converged" : "not converged (" + res.message + ")")
        << " iterations=" << res.iterations() << " cost=" << brief(last.cost) << " violation=" << brief(last.violation)
        << " multiplier=" << brief(res.lambda[0]) << "\n";
    return res.feasible ? ok : solver_failure;
  };
  p.check = [=](std::ostream& out) {
    auto demo = demos::make_constrained_control(params);
    demo.objective->corrupt_gradient_for_testing(corrupt);
    const std::size_t n = demo.problem->design_dimension();
    const Vector q = scaled(10.0, seeded_vector(n, common.seed));
    const Vector d = seeded_vector(n, common.seed + 1);
    const auto cf = check_gradient(*demo.objective, q, d);
    print_sweep(out, "constrained_control objective", cf);
    const auto cc = check_gradient(*demo.constraints[0].function, q, d);
    print_sweep(out, "constrained_control constraint", cc);
    return check_verdict(out, std::max(cf.best, cc.best));
  };
  return p;
}

inline spacemap::Config read_space_mapping(config::Document& doc) {
  spacemap::Config cfg;
  cfg.tol = doc.get_double("problem.tol", cfg.tol);
  cfg.max_iter = doc.get_size("optimizer.max_iter", cfg.max_iter);
  cfg.validate();
  return cfg;
}

inline double misfit(const Vector& a, const Vector& b) {
  const Vector d = sub(a, b);
  return 0.5 * dot(d, d);
}

inline Prepared spacemapping_flow(config::Document& doc, const Common& common) {
  demos::FlowParams params;
  params.coarse_resolution = doc.get_size("mesh.resolution", params.coarse_resolution);
  params.refinement = doc.get_size("problem.refinement", params.refinement);
  params.ramp = doc.get_double("problem.ramp", params.ramp);
  const spacemap::Config cfg = read_space_mapping(doc);
  if (params.coarse_resolution == 0 || params.refinement == 0) throw ConfigError("mesh.resolution", "must be positive");
  if (!(params.ramp > 0.0)) throw ConfigError("problem.ramp", "must be positive");

  Prepared p;
  p.run = [=](std::ostream& out) {
    demos::ChannelCoarseModel coarse(params);
    demos::ChannelFineModel fine(params);
    std::vector<double> imbalance;
    auto res = spacemap::solve(fine, coarse, cfg, [&](const spacemap::IterationRecord& r) {
      imbalance.push_back(demos::rate_imbalance(r.response));
      if (common.vtk) {
        std::filesystem::create_directories(common.output_dir);
        vtk::write_file((common.output_dir / vtk_name("potential", r.iter)).string(), fine.last_mesh(),
                        {{{"potential", fine.last_solution().potential}}, {}, {}});
      }
    });
    Csv csv("iter,cost,distance,fine_evaluations,imbalance");
    for (std::size_t k = 0; k < res.history.size(); ++k) {
      const auto& r = res.history[k];
      csv.row({double(r.iter), misfit(r.response, res.coarse_response), r.distance, double(r.fine_evaluations),
               imbalance[k]});
    }
    csv.write(common.output_dir);
    const auto& last = res.history.back();
    out << "spacemapping_flow: " << (res.converged ? "converged" : "not converged (" + res.message + ")")
        << " iterations=" << res.iterations() << " cost=" << brief(misfit(last.response, res.coarse_response))
        << " distance=" << brief(last.distance) << " imbalance=" << brief(imbalance.back())
        << " fine_evaluations=" << fine.evaluations() << "\n";
    return res.converged ? ok : solver_failure;
  };
  return p;
}

inline Prepared spacemapping_semilinear(config::Document& doc, const Common& common) {
  demos::SemilinearMappingParams params;
  params.coarse_resolution = doc.get_size("mesh.resolution", params.coarse_resolution);
  params.fine_resolution = doc.get_size("problem.fine_resolution", params.fine_resolution);
  params.cubic = doc.get_double("problem.cubic", params.cubic);
  params.target_amplitude = doc.get_double("problem.target_amplitude", params.target_amplitude);
  const spacemap::Config cfg = read_space_mapping(doc);
  if (params.coarse_resolution % 4 != 0 || params.coarse_resolution == 0)
    throw ConfigError("mesh.resolution", "must be a positive multiple of 4");
  if (params.fine_resolution % 4 != 0 || params.fine_resolution == 0)
    throw ConfigError("problem.fine_resolution", "must be a positive multiple of 4");
  if (!(params.cubic >= 0.0)) throw ConfigError("problem.cubic", "must be nonnegative");

  Prepared p;
  p.run = [=](std::ostream& out) {
    demos::SemilinearCoarseModel coarse(params);
    demos::SemilinearFineModel fine(params);
    auto res = spacemap::solve(fine, coarse, cfg, [&](const spacemap::IterationRecord& r) {
      if (common.vtk) {
        std::filesystem::create_directories(common.output_dir);
        vtk::write_file((common.output_dir / vtk_name("state", r.iter)).string(), fine.mesh(),
                        {{{"state", fine.last_state()}}, {}, {}});
      }
    });
    Csv csv("iter,cost,distance,fine_evaluations");
    for (const auto& r : res.history)
      csv.row({double(r.iter), misfit(r.response, res.coarse_response), r.distance, double(r.fine_evaluations)});
    csv.write(common.output_dir);
    const auto& last = res.history.back();
    out << "spacemapping_semilinear: " << (res.converged ? "converged" : "not converged (" + res.message + ")")
        << " iterations=" << res.iterations() << " cost=" << brief(misfit(last.response, res.coarse_response))
        << " distance=" << brief(last.distance) << " fine_evaluations=" << fine.evaluations() << "\n";
    return res.converged ? ok : solver_failure;
  };
  return p;
}

}  // namespace detail

inline const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries{
      {"poisson_control", "distributed control of a Poisson (optionally cubic) equation, reduced-gradient descent",
       detail::poisson_control},
      {"shape_poisson", "shape optimization of a Poisson domain integral, H1 / elasticity / p-Laplace gradients",
       detail::shape_poisson},
      {"topopt_source", "level-set topology optimization of a source layout (sphere update, quasi-Newton)",
       detail::topopt_source},
      {"constrained_control", "Poisson control with an integral state constraint, augmented Lagrangian / penalty",
       detail::constrained_control},
      {"spacemapping_flow", "space mapping on a three-outlet channel: equalize outlet flow rates",
       detail::spacemapping_flow},
      {"spacemapping_semilinear", "space mapping between a linear and a semilinear source-control model",
       detail::spacemapping_semilinear},
  };
  return entries;
}

inline std::string registry_names() {
  std::string s;
  for (const auto& e : registry()) s += (s.empty() ? "" : ", ") + e.name;
  return s;
}

/// Reads common keys, applies PDEOPT_OUTPUT_DIR, prepares the problem and
/// rejects unknown keys. Throws ConfigError.
inline std::pair<Common, Prepared> prepare(config::Document& doc) {
  Common common;
  common.problem = doc.get_string("problem");
  common.output_dir = doc.get_string("output_dir", "pdeopt_output");
  common.vtk = doc.get_bool("vtk", false);
  common.seed = doc.get_size("seed", 1);
  if (const char* env = std::getenv("PDEOPT_OUTPUT_DIR"); env && *env) common.output_dir = env;
  for (const auto& e : registry()) {
    if (e.name != common.problem) continue;
    Prepared p;
    try {
      p = e.prepare(doc, common);
    } catch (const ConfigError&) {
      throw;
    } catch (const InvalidArgument& err) {
      throw ConfigError("", err.what());
    }
    doc.reject_unused();
    return {common, p};
  }
  throw ConfigError("problem", "unknown problem '" + common.problem + "' (valid: " + registry_names() + ")");
}

enum class Verb { run, gradient_check };

/// Full command: parse, validate, execute. Returns the process exit code.
inline int execute(Verb verb, const std::string& path, std::ostream& out, std::ostream& err) {
  Common common;
  Prepared prepared;
  try {
    auto doc = config::Document::parse_file(path);
    std::tie(common, prepared) = prepare(doc);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return config_error;
  }
  const Task& task = verb == Verb::run ? prepared.run : prepared.check;
  if (!task) {
    err << "config error: gradient-check is not available for problem '" << common.problem
        << "' (available: poisson_control, shape_poisson, constrained_control)\n";
    return config_error;
  }
  try {
    linesearch::ScopedAudit audit;
    const int code = task(out);
    if (verb == Verb::run && !audit.all_satisfied()) {
      err << "line search audit: an accepted step violates the sufficient-decrease condition\n";
      return solver_failure;
    }
    return code;
  } catch (const Error& e) {
    err << "solver error: " << e.what() << "\n";
    return solver_failure;
  }
}

inline int list(std::ostream& out) {
  for (const auto& e : registry()) out << e.name << "  " << e.description << "\n";
  return ok;
}

}  // namespace pdeopt::cli
