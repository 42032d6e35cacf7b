#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ksobol/cli.hpp"

using namespace ksobol;
using namespace ksobol::cli;
namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("ksobol_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  fs::path write(const std::string& name, const std::string& text) const {
    const auto p = dir / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct Outcome {
  int status = 0;
  std::string out;
  std::string err;
};

Outcome run_cli(const Scratch& s, const std::string& args) {
  const auto out = s.dir / "stdout.txt";
  const auto err = s.dir / "stderr.txt";
  const std::string cmd = std::string(KSOBOL_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int raw = std::system(cmd.c_str());
  Outcome o;
  o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  o.out = slurp(out);
  o.err = slurp(err);
  return o;
}

FullSample parse(const std::string& text) {
  std::istringstream in(text);
  return parse_sample_csv(in, "data.csv");
}

Error error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an error");
  return Error(ErrorCode::invalid_argument, "");
}

}  // namespace

TEST_CASE("sample CSV loading", "[cli]") {
  SECTION("well-formed file") {
    const auto s = parse("v1,v2,y\n0.1,0.2,1.5\n0.3,0.4,-2\n\n0.5,0.6,3e-1\n");
    REQUIRE(s.n() == 3);
    REQUIRE(s.p() == 2);
    REQUIRE(s.V(1, 0) == 0.3);
    REQUIRE(s.V(2, 1) == 0.6);
    REQUIRE(s.Y(2) == 0.3);
  }

  SECTION("non-finite value names its line") {
    const auto e = error_of([] { parse("v1,y\n0.1,1\n0.2,NaN\n"); });
    REQUIRE(e.code() == ErrorCode::invalid_data);
    REQUIRE(std::string(e.what()).find("data.csv:3") != std::string::npos);
  }

  SECTION("header mismatch") {
    REQUIRE(error_of([] { parse("x1,y\n0.1,1\n"); }).code() == ErrorCode::schema_error);
    REQUIRE(error_of([] { parse("v1,v3,y\n0.1,0.2,1\n"); }).code() == ErrorCode::schema_error);
    REQUIRE(error_of([] { parse(""); }).code() == ErrorCode::schema_error);
  }

  SECTION("malformed rows") {
    const auto e = error_of([] { parse("v1,y\n0.1,1\n0.2\n"); });
    REQUIRE(e.code() == ErrorCode::parse_error);
    REQUIRE(std::string(e.what()).find(":3:") != std::string::npos);
    REQUIRE(error_of([] { parse("v1,y\n0.1,abc\n"); }).code() == ErrorCode::parse_error);
    REQUIRE(error_of([] { parse("v1,y\n0.1,1.0x\n"); }).code() == ErrorCode::parse_error);
  }

  SECTION("write and read back") {
    const auto m = ishigami_model();
    const auto s = m.draw(40, 3);
    std::ostringstream os;
    write_sample_csv(os, s);
    const auto back = parse(os.str());
    REQUIRE(back.V == s.V);
    REQUIRE(back.Y == s.Y);
  }
}

TEST_CASE("run configuration", "[cli]") {
  SECTION("round trip through JSON") {
    RunConfig c;
    c.command = "bandwidth";
    c.input.model = "weighted_linear";
    c.input.alpha = 3.5;
    c.input.n = 1234;
    c.input.seed = 99;
    c.mask = {1, 3};
    c.kernel.order = 4;
    c.bandwidth.mode = BandwidthSpec::Mode::automatic;
    c.bandwidth.grid_size = 11;
    c.bandwidth.refine = true;
    c.bandwidth.normalization = TargetNormalization::as_printed;
    c.density.mode = DensitySpec::Mode::mirror_kde;
    c.density.eta = 0.3;
    c.density.h = 0.07;
    c.correction = VarianceCorrection::asymptotic;
    c.study.n_grid = {100, 200};
    c.study.estimators = {"kernel", "rank"};
    c.ci_level = 0.9;
    c.threads = 3;
    c.format = "csv";
    const auto j = to_json(c);
    const auto back = config_from_json(j);
    REQUIRE(to_json(back) == j);
    REQUIRE(to_json(config_from_json(json::parse(j.dump()))).dump() == j.dump());

    RunConfig csv;
    csv.input.csv = "data.csv";
    csv.marginals = InputModel({Marginal(Beta{2.0, 3.0}), Marginal(Uniform{-1.0, 2.0})});
    csv.bandwidth.mode = BandwidthSpec::Mode::rule;
    csv.bandwidth.c = 0.5;
    csv.bandwidth.gamma = 0.3;
    const auto jc = to_json(csv);
    REQUIRE(to_json(config_from_json(jc)) == jc);
  }

  SECTION("schema violations name the field") {
    REQUIRE(error_of([] { config_from_json(json{{"bogus", 1}}); }).field() == "bogus");
    REQUIRE(error_of([] { config_from_json(json{{"bandwidth", {{"mode", "fixed"}}}}); }).field() == "bandwidth.h");
    REQUIRE(error_of([] { config_from_json(json{{"bandwidth", {{"mode", "rule"}, {"h", 0.1}}}}); }).field() ==
            "bandwidth.h");
    REQUIRE(error_of([] { config_from_json(json{{"bandwidth", {{"mode", "sometimes"}}}}); }).field() ==
            "bandwidth.mode");
    REQUIRE(error_of([] { config_from_json(json{{"threads", "many"}}); }).field() == "threads");
    RunConfig c;
    c.mask = {};
    REQUIRE(error_of([&] { validate(c); }).field() == "mask");
    c = RunConfig{};
    c.mask = {2, 1};
    REQUIRE(error_of([&] { validate(c); }).field() == "mask");
    c = RunConfig{};
    c.density.mode = DensitySpec::Mode::mirror_kde;
    REQUIRE(error_of([&] { validate(c); }).field() == "density.eta");
    c = RunConfig{};
    c.ci_level = 1.0;
    REQUIRE(error_of([&] { validate(c); }).field() == "ci_level");
    c = RunConfig{};
    c.mask = {4};
    REQUIRE(error_of([&] { render(c); }).field() == "mask");
  }

  SECTION("flags override a config file") {
    Scratch s;
    RunConfig base;
    base.input.n = 300;
    base.ci_level = 0.8;
    const auto path = s.write("cfg.json", to_json(base).dump());
    const std::string cfg = path.string();
    const char* argv[] = {"ksobol", "estimate", "--config", cfg.c_str(), "--n", "700", "--c", "1", "--gamma", "0.4"};
    const auto c = parse_args(10, argv);
    REQUIRE(c.input.n == 700);
    REQUIRE(c.ci_level == 0.8);
    REQUIRE(c.bandwidth.mode == BandwidthSpec::Mode::rule);
    const char* both[] = {"ksobol", "estimate", "--h", "0.1", "--gamma", "0.4"};
    REQUIRE(error_of([&] { parse_args(6, both); }).field() == "bandwidth.mode");
  }
}

TEST_CASE("estimate on the linear model", "[cli]") {
  Scratch s;
  const auto o = run_cli(s, "estimate --model linear --p 3 --n 5000 --seed 1 --mask 1");
  REQUIRE(o.status == 0);
  const auto j = json::parse(o.out);
  REQUIRE(j.at("schema_version") == kSchemaVersion);
  REQUIRE(j.at("config").at("input").at("n") == 5000);
  REQUIRE(j.at("truth").at("sobol").get<double>() == Catch::Approx(1.0 / 3.0));
  const double sobol = j.at("result").at("sobol").get<double>();

  // Same draw through the library.
  const auto m = linear_model(3);
  const SubsetSpec spec({0});
  const auto density = InputDensity::exact(m.inputs, spec);
  const auto k = tensorize(build_kernel_1d(BaseDensity::uniform_half(), 2), 1);
  const double h = default_bandwidth(5000, 2, 1, density.domain);
  REQUIRE(estimate_sobol(m.draw(5000, 1), spec, k, h, density).sobol == sobol);
  const auto ci = j.at("result").at("ci");
  const double half = 0.5 * (ci[1].get<double>() - ci[0].get<double>());
  REQUIRE(std::abs(sobol - 1.0 / 3.0) <= 1.5 * half);

  // The embedded config reproduces the run.
  const auto cfg = s.write("embedded.json", j.at("config").dump());
  const auto again = run_cli(s, "estimate --config " + cfg.string());
  REQUIRE(again.status == 0);
  REQUIRE(again.out == o.out);

  INFO("sobol " << sobol);
  CHECK(std::abs(sobol - 1.0 / 3.0) <= 0.05);
}

TEST_CASE("command-line runs", "[cli]") {
  Scratch s;

  SECTION("identical bytes on repeat and across threads") {
    const std::string args = "coverage --model linear --mask 1 --n-grid 400,800 --seeds 12 --c 1 --gamma 0.4";
    const auto a = run_cli(s, args + " --threads 1");
    const auto b = run_cli(s, args + " --threads 1");
    const auto c = run_cli(s, args + " --threads 8");
    REQUIRE(a.status == 0);
    REQUIRE(a.out == b.out);
    // The config records the thread count; every other byte must match.
    auto strip = [](std::string t) {
      auto j = json::parse(t);
      j["config"].erase("threads");
      return j.dump();
    };
    REQUIRE(strip(a.out) == strip(c.out));
  }

  SECTION("CSV input and file output") {
    const auto m = linear_model(2);
    std::ostringstream os;
    write_sample_csv(os, m.draw(800, 5));
    const auto data = s.write("data.csv", os.str());
    const auto target = s.dir / "out" / "est.csv";
    const auto o = run_cli(s, "estimate --csv " + data.string() + " --mask 2 --h 0.1 --format csv --output " +
                                  target.string());
    REQUIRE(o.status == 0);
    REQUIRE(o.out.empty());
    const auto text = slurp(target);
    REQUIRE(text.rfind("t_hat,sobol,", 0) == 0);
    REQUIRE(std::count(text.begin(), text.end(), '\n') == 2);
  }

  SECTION("study table columns") {
    const auto o = run_cli(s, "compare --model linear --mask 1 --n-grid 300 --seeds 4 --estimators kernel,pf,nn,rank "
                              "--format csv");
    REQUIRE(o.status == 0);
    REQUIRE(o.out.rfind("model,mask,estimator,n,h,seed_count,mean,rmse,var_scaled_by_n,coverage,", 0) == 0);
    REQUIRE(std::count(o.out.begin(), o.out.end(), '\n') == 5);
  }

  SECTION("bandwidth command") {
    const auto o = run_cli(s, "bandwidth --model linear --n 300 --mask 1 --grid-size 5 --bandwidth auto");
    REQUIRE(o.status == 0);
    const auto j = json::parse(o.out);
    REQUIRE(j.at("result").at("curve").size() == 5);
    REQUIRE(j.at("result").at("h_star").get<double>() > 0.0);
  }

  SECTION("malformed config gives an error document") {
    const auto bad = s.write("bad.json", R"({"command": "estimate", "kernel": {"order": "two"}})");
    const auto o = run_cli(s, "estimate --config " + bad.string());
    REQUIRE(o.status != 0);
    const auto j = json::parse(o.err);
    REQUIRE(j.at("error").at("field").get<std::string>().find("kernel") != std::string::npos);

    const auto o2 = run_cli(s, "estimate --model linear --mask 1 --bandwidth fixed --h -1");
    REQUIRE(o2.status != 0);
    REQUIRE(json::parse(o2.err).at("error").at("field") == "bandwidth.h");

    const auto o3 = run_cli(s, "estimate --csv " + (s.dir / "missing.csv").string());
    REQUIRE(o3.status != 0);
    REQUIRE(json::parse(o3.err).at("error").at("code") == "io_error");

    const auto unparsable = s.write("junk.json", "{ not json");
    const auto o4 = run_cli(s, "estimate --config " + unparsable.string());
    REQUIRE(o4.status != 0);
    REQUIRE(json::parse(o4.err).at("error").at("field") == "config");
  }

  SECTION("help exits cleanly") {
    const auto o = run_cli(s, "estimate --help");
    REQUIRE(o.status == 0);
    REQUIRE(o.out.find("--mask") != std::string::npos);
  }
}
