#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "detlab/cli_io.hpp"

using namespace detlab;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string thrown_message(const std::vector<std::string>& args) {
  try {
    parse_config(args);
  } catch (const InvalidConfig& e) {
    return e.what();
  }
  return "";
}

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return CliRun{code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("argument parsing fills defaults per subcommand") {
  const ExperimentConfig clt = parse_config({"clt"});
  CHECK(clt.experiment == ExperimentKind::clt);
  CHECK(clt.n_values == std::vector<int>{256});
  CHECK(clt.trials == 400);
  CHECK(clt.master_seed == 42);
  CHECK(clt.ensemble.kind == "bernoulli");
  CHECK(clt.output_dir == "out");
  CHECK_FALSE(clt.trials_explicit);
  CHECK_FALSE(clt.ensemble_explicit);
  CHECK_FALSE(clt.tail_block_override.has_value());

  const ExperimentConfig rate = parse_config({"rate"});
  CHECK(rate.experiment == ExperimentKind::rate);
  CHECK(rate.n_values == std::vector<int>{64, 128, 256, 512});
  CHECK(rate.trials == 800);
}

TEST_CASE("argument parsing honors every flag") {
  const ExperimentConfig cfg = parse_config(
      {"hybrid", "--n", "64", "--n", "128", "--trials", "50", "--seed", "7", "--ensemble",
       "gaussian", "--eps", "0.1", "--level", "3", "--tail", "10", "--workers", "2", "--out",
       "elsewhere"});
  CHECK(cfg.experiment == ExperimentKind::hybrid);
  CHECK(cfg.n_values == std::vector<int>{64, 128});
  CHECK(cfg.trials == 50);
  CHECK(cfg.trials_explicit);
  CHECK(cfg.master_seed == 7);
  CHECK(cfg.ensemble.kind == "gaussian");
  CHECK(cfg.ensemble.eps == 0.1);
  REQUIRE(cfg.ensemble.level.has_value());
  CHECK(*cfg.ensemble.level == 3.0);
  CHECK(cfg.ensemble_explicit);
  REQUIRE(cfg.tail_block_override.has_value());
  CHECK(*cfg.tail_block_override == 10);
  CHECK(cfg.workers == 2);
  CHECK(cfg.output_dir == "elsewhere");
}

TEST_CASE("argument parsing rejects malformed invocations") {
  CHECK_THROWS_AS(parse_config({}), InvalidConfig);
  CHECK_THROWS_AS(parse_config({"bogus"}), InvalidConfig);
  CHECK_THROWS_AS(parse_config({"clt", "--unknown"}), InvalidConfig);
  CHECK_THROWS_AS(parse_config({"clt", "--trials", "abc"}), InvalidConfig);
  CHECK_THROWS_AS(parse_config({"clt", "--trials", "0"}), InvalidConfig);
  CHECK_THROWS_AS(parse_config({"clt", "--ensemble", "pareto"}), InvalidConfig);
  CHECK_THROWS_AS(parse_config({"clt", "--n", "1"}), InvalidConfig);
  CHECK_THROWS_AS(parse_config({"replace", "--trials", "499"}), InvalidConfig);
  CHECK_THROWS_AS(parse_config({"--help"}), HelpRequested);
  CHECK_THROWS_AS(parse_config({"clt", "--help"}), HelpRequested);
}

TEST_CASE("config files merge under the flags") {
  const std::string dir = "test_out/cli";
  const std::string path = dir + "/cfg.json";
  write_text_file(path,
                  "{\"experiment\":\"rate\",\"n_values\":[40],\"trials\":123,\"seed\":9,"
                  "\"ensemble\":\"gaussian\",\"out\":\"fromfile\"}");

  const ExperimentConfig file_only = parse_config({"clt", "--config", path});
  CHECK(file_only.experiment == ExperimentKind::clt);  // subcommand wins
  CHECK(file_only.n_values == std::vector<int>{40});
  CHECK(file_only.trials == 123);
  CHECK(file_only.trials_explicit);
  CHECK(file_only.master_seed == 9);
  CHECK(file_only.ensemble.kind == "gaussian");
  CHECK(file_only.output_dir == "fromfile");

  const ExperimentConfig mixed = parse_config({"clt", "--config", path, "--trials", "99"});
  CHECK(mixed.trials == 99);  // flag beats file
  CHECK(mixed.n_values == std::vector<int>{40});

  const std::string obj_path = dir + "/cfg_obj.json";
  write_text_file(obj_path,
                  "{\"ensemble\":{\"kind\":\"uniform_scaled\",\"eps\":0.2},\"tail\":6}");
  const ExperimentConfig obj = parse_config({"hybrid", "--config", obj_path});
  CHECK(obj.ensemble.kind == "uniform_scaled");
  CHECK(obj.ensemble.eps == 0.2);
  CHECK(obj.ensemble_explicit);
  REQUIRE(obj.tail_block_override.has_value());
  CHECK(*obj.tail_block_override == 6);
}

TEST_CASE("config files fail loudly") {
  const std::string dir = "test_out/cli";
  CHECK_THROWS_AS(parse_config({"clt", "--config", dir + "/nope.json"}), InvalidConfig);

  const std::string bad_json = dir + "/bad.json";
  write_text_file(bad_json, "{not json");
  CHECK_THROWS_AS(parse_config({"clt", "--config", bad_json}), InvalidConfig);

  const std::string bad_key = dir + "/bad_key.json";
  write_text_file(bad_key, "{\"foo\": 1}");
  const std::string msg = thrown_message({"clt", "--config", bad_key});
  CHECK(msg.find("unknown config key: foo") != std::string::npos);

  const std::string bad_exp = dir + "/bad_exp.json";
  write_text_file(bad_exp, "{\"experiment\":\"bogus\"}");
  CHECK_THROWS_AS(parse_config({"clt", "--config", bad_exp}), InvalidConfig);

  const std::string bad_type = dir + "/bad_type.json";
  write_text_file(bad_type, "{\"trials\": \"many\"}");
  CHECK_THROWS_AS(parse_config({"clt", "--config", bad_type}), InvalidConfig);

  const std::string arr = dir + "/arr.json";
  write_text_file(arr, "[1,2,3]");
  CHECK_THROWS_AS(parse_config({"clt", "--config", arr}), InvalidConfig);
}

TEST_CASE("cli dispatch and exit codes") {
  const CliRun help = cli({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("clt") != std::string::npos);
  CHECK(help.out.find("decompose") != std::string::npos);

  const CliRun verify = cli({"verify"});
  CHECK(verify.code == 0);
  CHECK(verify.out.find("verify: PASS") != std::string::npos);
  CHECK(verify.out.find("FAIL") == std::string::npos);

  const CliRun bad = cli({"clt", "--trials", "0"});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("config error") != std::string::npos);

  const CliRun unknown = cli({"nonsense"});
  CHECK(unknown.code == 2);

  const CliRun decomp = cli({"decompose", "--n", "8", "--seed", "5"});
  CHECK(decomp.code == 0);
  CHECK(decomp.out.rfind("i,k,delta_sq,x,r,qss_sq_sum,y,z\n", 0) == 0);
  CHECK(decomp.err.find("degenerate at row 7") != std::string::npos);

  const CliRun run = cli({"clt", "--n", "16", "--trials", "40", "--seed", "4", "--out",
                          "test_out/cli_run"});
  CHECK(run.code == 0);
  CHECK(run.out.find("n=16") != std::string::npos);
  CHECK(run.out.find("suite: PASS") != std::string::npos);
  CHECK(run.out.find("report: test_out/cli_run/clt_report.json") != std::string::npos);

  const nlohmann::json rep = nlohmann::json::parse(slurp("test_out/cli_run/clt_report.json"));
  CHECK(rep["experiment"] == "clt");
  CHECK(rep["suite_pass"] == true);
  CHECK(rep["trials"] == 40);
  REQUIRE(rep["per_n"].is_array());
  CHECK(rep["per_n"][0]["n"] == 16);
  CHECK(rep["per_n"][0]["retained"].get<int>() + rep["per_n"][0]["singular"].get<int>() == 40);
  CHECK(rep["per_n"][0].contains("ks_d"));
  CHECK(rep["ensemble"]["kind"] == "bernoulli");
}

TEST_CASE("cli reports io failures") {
  write_text_file("test_out/cli_block", "in the way");
  const CliRun blocked = cli({"clt", "--n", "16", "--trials", "40", "--out",
                              "test_out/cli_block/sub"});
  CHECK(blocked.code == 3);
  CHECK(blocked.err.find("io error") != std::string::npos);
}

TEST_CASE("csv emitters round trip through files") {
  TrialRecord a;
  a.n = 8;
  a.trial_index = 0;
  a.statistic = 0.5;
  a.log_abs_det = 2.25;
  a.sign = -1;
  TrialRecord b;
  b.n = 8;
  b.trial_index = 1;
  b.degenerate = true;
  const std::vector<TrialRecord> recs = {a, b};
  const std::string path = "test_out/cli/trials.csv";
  emit_csv(recs, path);
  const std::string text = slurp(path);
  CHECK(text == exp_detail::trial_csv_text(recs));
  CHECK(text.find("8,0,0.5,2.25,-1,0\n") != std::string::npos);
  CHECK(text.find("8,1,-inf,-inf,0,1\n") != std::string::npos);

  LemmaReport lr;
  lr.lemma_id = "example";
  lr.n = 16;
  lr.trials = 10;
  lr.observed = 0.25;
  lr.predicted = 0.25;
  lr.pass = true;
  lr.notes = "first, second\nthird";
  const std::string lpath = "test_out/cli/lemmas.csv";
  emit_csv(std::vector<LemmaReport>{lr}, lpath);
  const std::string ltext = slurp(lpath);
  CHECK(ltext.find("first; second;third") != std::string::npos);
  CHECK(ltext.rfind("lemma_id,n,trials,observed,predicted,std_error,pass,notes\n", 0) == 0);

  const MatrixSample m = sample_matrix(6, AtomDistribution::gaussian(), SeedSpec{3, 0});
  const std::string tcsv = trace_csv(decompose_rows(m, true));
  CHECK(tcsv.rfind("i,k,delta_sq,x,r,qss_sq_sum,y,z\n", 0) == 0);
  CHECK(std::count(tcsv.begin(), tcsv.end(), '\n') == 7);
}

TEST_CASE("float serialization survives a parse round trip") {
  for (double v : {0.1, 1.0 / 3.0, 3.141592653589793, 1e-300, 5e-324, 1.7976931348623157e308,
                   -2.5, 0.0}) {
    const std::string s = fmt_float17(v);
    CHECK(std::strtod(s.c_str(), nullptr) == v);
  }
  const std::string neg_zero = fmt_float17(-0.0);
  CHECK(std::signbit(std::strtod(neg_zero.c_str(), nullptr)));
  CHECK(fmt_float17(kNegInf) == "-inf");
  CHECK(fmt_float17(-kNegInf) == "inf");
  CHECK(fmt_float17(std::nan("")) == "nan");
}

TEST_CASE("histogram rendering") {
  std::vector<double> samples = {-0.5, 0.0, 0.3, 0.7, -1.2, 10.0};
  const std::string svg = render_histogram_svg(samples, true, "spread check");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("spread check") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);  // normal overlay
  CHECK(svg.find("clipped=1") != std::string::npos);  // the 10.0 sample
  CHECK(svg.find("T=6") != std::string::npos);

  const std::string plain = render_histogram_svg(samples, false, "");
  CHECK(plain.find("polyline") == std::string::npos);

  CHECK_THROWS_AS(render_histogram_svg({}, true), EmptySample);
  const std::vector<double> junk = {std::nan(""), kNegInf};
  CHECK_THROWS_AS(render_histogram_svg(junk, true), EmptySample);

  emit_histogram_svg(samples, "test_out/cli/h.svg", true, "file");
  CHECK(slurp("test_out/cli/h.svg").find("<svg") != std::string::npos);
}

TEST_CASE("text files land in freshly created directories") {
  const std::string path = "test_out/cli/deep/a/b/c.txt";
  std::filesystem::remove_all("test_out/cli/deep");
  write_text_file(path, "payload");
  CHECK(slurp(path) == "payload");
  write_text_file("test_out/cli/plainfile", "x");
  CHECK_THROWS_AS(write_text_file("test_out/cli/plainfile/under.txt", "y"), IoError);
}
