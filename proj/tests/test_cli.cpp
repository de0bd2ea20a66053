#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "pdeopt/cli.hpp"
#include "pdeopt/config.hpp"

using namespace pdeopt;
namespace fs = std::filesystem;

namespace {

const fs::path demo_dir = fs::path(PDEOPT_SOURCE_DIR) / "demos";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "pdeopt_cli_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "config.toml";
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Runs with PDEOPT_OUTPUT_DIR set to `out`.
int run(cli::Verb verb, const fs::path& config, const fs::path& out, std::string* stdout_text = nullptr,
        std::string* stderr_text = nullptr) {
  setenv("PDEOPT_OUTPUT_DIR", out.c_str(), 1);
  std::ostringstream o, e;
  const int code = cli::execute(verb, config.string(), o, e);
  unsetenv("PDEOPT_OUTPUT_DIR");
  if (stdout_text) *stdout_text = o.str();
  if (stderr_text) *stderr_text = e.str();
  return code;
}

std::size_t reported_iterations(const std::string& summary) {
  const auto pos = summary.find("iterations=");
  return std::stoul(summary.substr(pos + 11));
}

std::size_t data_rows(const std::string& csv) {
  std::size_t n = 0;
  for (char c : csv) n += c == '\n';
  return n - 1;
}

}  // namespace

TEST(ConfigParser, SectionsTypesAndComments) {
  auto doc = config::Document::parse_string(
      "problem = \"x\"  # name\nflag = true\n[mesh]\nresolution = 16\n[optimizer]\nrtol = 1e-3\n");
  EXPECT_EQ(doc.get_string("problem"), "x");
  EXPECT_TRUE(doc.get_bool("flag", false));
  EXPECT_EQ(doc.get_size("mesh.resolution", 0), 16u);
  EXPECT_DOUBLE_EQ(doc.get_double("optimizer.rtol", 0.0), 1e-3);
  EXPECT_EQ(doc.get_double("optimizer.atol", 7.0), 7.0);
  EXPECT_NO_THROW(doc.reject_unused());
}

TEST(ConfigParser, ErrorsNameTheKey) {
  auto doc = config::Document::parse_string("[mesh]\nresolution = 2.5\nbogus = 1\n");
  try {
    doc.get_size("mesh.resolution", 1);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "mesh.resolution");
  }
  try {
    doc.reject_unused();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "mesh.bogus");
  }
  EXPECT_THROW(config::Document::parse_string("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(config::Document::parse_string("a = \"open\n"), ConfigError);
  EXPECT_THROW(config::Document::parse_string("a = 1x\n"), ConfigError);
  EXPECT_THROW(config::Document::parse_string("[mesh\n"), ConfigError);
  auto choice = config::Document::parse_string("m = \"cubic\"\n");
  EXPECT_THROW(choice.get_choice("m", "armijo", {"armijo", "polynomial"}), ConfigError);
}

TEST(Cli, PoissonControlWritesHistory) {
  const fs::path out = scratch("poisson");
  std::string text;
  ASSERT_EQ(run(cli::Verb::run, demo_dir / "poisson_control.toml", out, &text), cli::ok);
  const std::string csv = slurp(out / "history.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iter,cost,grad_norm,step");
  // One row per iterate, the initial design included.
  EXPECT_EQ(data_rows(csv), reported_iterations(text) + 1);
}

TEST(Cli, UnknownProblemListsNames) {
  const fs::path dir = scratch("unknown");
  std::string err;
  EXPECT_EQ(run(cli::Verb::run, write_config(dir, "problem = \"heat\"\n"), dir, nullptr, &err), cli::config_error);
  EXPECT_NE(err.find("spacemapping_semilinear"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "history.csv"));
}

TEST(Cli, UnknownKeyIsRejectedBeforeSolving) {
  const fs::path dir = scratch("badkey");
  std::string err;
  const auto cfg = write_config(dir, "problem = \"poisson_control\"\n[optimizer]\nmax_iters = 3\n");
  EXPECT_EQ(run(cli::Verb::run, cfg, dir, nullptr, &err), cli::config_error);
  EXPECT_NE(err.find("optimizer.max_iters"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "history.csv"));
  EXPECT_EQ(run(cli::Verb::run, dir / "missing.toml", dir), cli::config_error);
  const auto bad = write_config(dir, "problem = \"poisson_control\"\n[linesearch]\nc1 = 2\n");
  EXPECT_EQ(run(cli::Verb::run, bad, dir), cli::config_error);
}

TEST(Cli, ForcedNonconvergenceExitsTwo) {
  const fs::path dir = scratch("maxiter");
  std::string text;
  const auto cfg = write_config(dir, "problem = \"poisson_control\"\n[optimizer]\nmax_iter = 1\n");
  EXPECT_EQ(run(cli::Verb::run, cfg, dir, &text), cli::solver_failure);
  EXPECT_NE(text.find("not converged"), std::string::npos);
  EXPECT_EQ(data_rows(slurp(dir / "history.csv")), 2u);
}

TEST(Cli, OutputDirectoryFromConfigAndEnvironment) {
  const fs::path dir = scratch("outdir");
  const auto cfg = write_config(dir, "problem = \"spacemapping_semilinear\"\noutput_dir = \"" +
                                         (dir / "from_config").string() + "\"\nvtk = true\n");
  std::ostringstream o, e;
  unsetenv("PDEOPT_OUTPUT_DIR");
  ASSERT_EQ(cli::execute(cli::Verb::run, cfg.string(), o, e), cli::ok);
  EXPECT_TRUE(fs::exists(dir / "from_config" / "history.csv"));
  EXPECT_TRUE(fs::exists(dir / "from_config" / "state_0000.vtk"));
  ASSERT_EQ(run(cli::Verb::run, cfg, dir / "from_env"), cli::ok);
  EXPECT_TRUE(fs::exists(dir / "from_env" / "history.csv"));
  EXPECT_EQ(slurp(dir / "from_config" / "history.csv"), slurp(dir / "from_env" / "history.csv"));
  EXPECT_EQ(slurp(dir / "from_env" / "state_0000.vtk").rfind("# vtk DataFile Version 3.0\n", 0), 0u);
}

TEST(Cli, GradientCheckPassesAndDetectsCorruption) {
  const fs::path dir = scratch("gradcheck");
  EXPECT_EQ(run(cli::Verb::gradient_check, demo_dir / "poisson_control.toml", dir), cli::ok);
  EXPECT_EQ(run(cli::Verb::gradient_check, demo_dir / "shape_poisson.toml", dir), cli::ok);
  EXPECT_EQ(run(cli::Verb::gradient_check, demo_dir / "constrained_control.toml", dir), cli::ok);
  std::string text;
  const auto bad = write_config(dir, "problem = \"poisson_control\"\n[check]\ncorrupt_gradient = 1.01\n");
  EXPECT_EQ(run(cli::Verb::gradient_check, bad, dir, &text), cli::solver_failure);
  EXPECT_NE(text.find("FAIL"), std::string::npos);
  const auto bad_shape = write_config(dir, "problem = \"shape_poisson\"\n[check]\ncorrupt_gradient = 1.01\n");
  EXPECT_EQ(run(cli::Verb::gradient_check, bad_shape, dir), cli::solver_failure);
  EXPECT_EQ(run(cli::Verb::gradient_check, demo_dir / "topopt_source.toml", dir), cli::config_error);
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  for (const char* name : {"poisson_control", "shape_poisson", "topopt_source", "constrained_control"}) {
    const fs::path a = scratch(std::string(name) + "_a"), b = scratch(std::string(name) + "_b");
    ASSERT_EQ(run(cli::Verb::run, demo_dir / (std::string(name) + ".toml"), a), cli::ok) << name;
    ASSERT_EQ(run(cli::Verb::run, demo_dir / (std::string(name) + ".toml"), b), cli::ok) << name;
    EXPECT_EQ(slurp(a / "history.csv"), slurp(b / "history.csv")) << name;
  }
}

TEST(Cli, ListNamesEveryProblem) {
  std::ostringstream o;
  EXPECT_EQ(cli::list(o), cli::ok);
  for (const auto& e : cli::registry()) EXPECT_NE(o.str().find(e.name), std::string::npos);
  EXPECT_EQ(cli::registry().size(), 6u);
}
