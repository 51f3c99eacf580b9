// End-to-end runs of the installed command line binary. Each case shells out
// to the real executable, so these tests cover argument parsing, exit codes,
// and the files a run leaves behind rather than library internals.
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Scratch directory that cleans up after itself.
struct TempDir {
  fs::path path;

  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("atnl-cli-test-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

CliResult run_cli(const std::string& args, const std::string& env = "") {
  TempDir capture;
  fs::path out_file = capture.path / "stdout";
  fs::path err_file = capture.path / "stderr";
  std::string command = env + (env.empty() ? "" : " ") + "'" ATNL_CLI_PATH
                        "' " + args + " > '" + out_file.string() + "' 2> '" +
                        err_file.string() + "'";
  int status = std::system(command.c_str());
  CliResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(out_file);
  result.err = slurp(err_file);
  return result;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// Metric rows minus the trailing throughput column, which depends on wall
// time and is the one field allowed to differ between identical runs.
std::string stable_metrics(const fs::path& file) {
  std::ostringstream kept;
  for (const std::string& line : lines_of(slurp(file))) {
    std::size_t cut = line.rfind('\t');
    kept << line.substr(0, cut) << '\n';
  }
  return kept.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

const std::string kShortRun =
    "--set total_steps=20 --set warmup_steps=10 --set checkpoint_interval=10 "
    "--set train_count=512 --set eval_count=64";

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("a zero step run leaves the initial checkpoint and a config echo") {
    TempDir dir;
    CliResult r = run_cli("train --set total_steps=0 --set train_count=64 "
                          "--set eval_count=8 --out '" +
                          dir.path.string() + "'");
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(dir.path / "checkpoint-000000.atnl"));
    CHECK_FALSE(fs::exists(dir.path / "checkpoint-000001.atnl"));
    CHECK(fs::is_empty(dir.path / "metrics.tsv"));

    std::string echo = slurp(dir.path / "run.log");
    CHECK(echo.find("total_steps = 0") != std::string::npos);
    CHECK(echo.find("train_count = 64") != std::string::npos);
    CHECK(echo.find("task = copy") != std::string::npos);
  }

  TEST_CASE("two runs with the same seed agree on everything but timing") {
    TempDir a;
    TempDir b;
    CHECK(run_cli("train " + kShortRun + " --seed 7 --out '" +
                  a.path.string() + "'").exit_code == 0);
    CHECK(run_cli("train " + kShortRun + " --seed 7 --out '" +
                  b.path.string() + "'").exit_code == 0);

    CHECK(stable_metrics(a.path / "metrics.tsv") ==
          stable_metrics(b.path / "metrics.tsv"));
    CHECK(slurp(a.path / "checkpoint-000020.atnl") ==
          slurp(b.path / "checkpoint-000020.atnl"));
    CHECK(slurp(a.path / "run.log") == slurp(b.path / "run.log"));
  }

  TEST_CASE("a run with a different seed diverges") {
    TempDir a;
    TempDir b;
    CHECK(run_cli("train " + kShortRun + " --seed 7 --out '" +
                  a.path.string() + "'").exit_code == 0);
    CHECK(run_cli("train " + kShortRun + " --seed 8 --out '" +
                  b.path.string() + "'").exit_code == 0);
    CHECK(slurp(a.path / "checkpoint-000020.atnl") !=
          slurp(b.path / "checkpoint-000020.atnl"));
  }

  TEST_CASE("rejected flags and keys exit with code 1") {
    TempDir dir;
    CHECK(run_cli("train --set blorp=1 --out '" + dir.path.string() +
                  "'").exit_code == 1);
    CHECK(run_cli("train --set seed --out '" + dir.path.string() +
                  "'").exit_code == 1);
    CHECK(run_cli("train --set p_drop=1.5 --out '" + dir.path.string() +
                  "'").exit_code == 1);
    CHECK(run_cli("check bogus").exit_code == 1);
    CHECK(run_cli("").exit_code == 1);
    CHECK(run_cli("--help").exit_code == 0);
  }

  TEST_CASE("decode keeps line alignment and honors beam flags") {
    TempDir dir;
    REQUIRE(run_cli("train " + kShortRun + " --seed 3 --out '" +
                    dir.path.string() + "'").exit_code == 0);
    fs::path ckpt = dir.path / "checkpoint-000020.atnl";
    fs::path input = dir.path / "input.txt";
    write_file(input, "a b c\n\nf g h i j\n");

    CliResult beam = run_cli("decode '" + ckpt.string() + "' --input '" +
                             input.string() + "' --beam 4 --alpha 0.6");
    CHECK(beam.exit_code == 0);
    CHECK(lines_of(beam.out).size() == 3);
    CHECK(lines_of(beam.out)[1].empty());

    CliResult again = run_cli("decode '" + ckpt.string() + "' --input '" +
                              input.string() + "' --beam 4 --alpha 0.6");
    CHECK(beam.out == again.out);

    CliResult one = run_cli("decode '" + ckpt.string() + "' --input '" +
                            input.string() + "' --beam 1");
    CHECK(one.exit_code == 0);
    CHECK(lines_of(one.out).size() == 3);

    CliResult to_file = run_cli("decode '" + ckpt.string() + "' --input '" +
                                input.string() + "' --out '" +
                                (dir.path / "decoded.txt").string() + "'");
    CHECK(to_file.exit_code == 0);
    CHECK(to_file.out.empty());
    CHECK(slurp(dir.path / "decoded.txt") == beam.out);
  }

  TEST_CASE("averaging the same checkpoint five times changes nothing") {
    TempDir dir;
    REQUIRE(run_cli("train " + kShortRun + " --seed 5 --out '" +
                    dir.path.string() + "'").exit_code == 0);
    fs::path ckpt = dir.path / "checkpoint-000020.atnl";
    fs::path input = dir.path / "input.txt";
    write_file(input, "c d e f\n");

    std::string single = run_cli("decode '" + ckpt.string() + "' --input '" +
                                 input.string() + "'").out;
    std::string five;
    {
      std::string repeated;
      for (int i = 0; i < 5; ++i) repeated += "'" + ckpt.string() + "' ";
      five = run_cli("decode " + repeated + "--input '" + input.string() +
                     "'").out;
    }
    CHECK(single == five);

    fs::path avg_path = dir.path / "avg.atnl";
    CliResult avg = run_cli("avg '" + ckpt.string() + "' '" + ckpt.string() +
                            "' --out '" + avg_path.string() + "'");
    CHECK(avg.exit_code == 0);
    CHECK(slurp(avg_path) == slurp(ckpt));
  }

  TEST_CASE("decode failures map to the documented exit codes") {
    TempDir dir;
    REQUIRE(run_cli("train --set total_steps=0 --set train_count=64 "
                    "--set eval_count=8 --out '" +
                    dir.path.string() + "'").exit_code == 0);
    fs::path ckpt = dir.path / "checkpoint-000000.atnl";

    fs::path bad_symbols = dir.path / "bad.txt";
    write_file(bad_symbols, "a zz b\n");
    CliResult unknown = run_cli("decode '" + ckpt.string() + "' --input '" +
                                bad_symbols.string() + "'");
    CHECK(unknown.exit_code == 1);
    CHECK(unknown.err.find("zz") != std::string::npos);

    CliResult missing = run_cli("decode '" +
                                (dir.path / "nope.atnl").string() +
                                "' --input '" + bad_symbols.string() + "'");
    CHECK(missing.exit_code == 2);

    CliResult no_input = run_cli("decode '" + ckpt.string() + "' --input '" +
                                 (dir.path / "nope.txt").string() + "'");
    CHECK(no_input.exit_code == 1);
  }

  TEST_CASE("the self check suites pass and report measurements") {
    CliResult variance = run_cli("check variance --dk 64 --samples 10000");
    CHECK(variance.exit_code == 0);
    CHECK(variance.out.find("variance.raw: PASS") != std::string::npos);
    CHECK(variance.out.find("[57.6, 70.4]") != std::string::npos);

    CliResult pe = run_cli("check pe");
    CHECK(pe.exit_code == 0);
    CHECK(pe.out.find("pe.zero_row: PASS") != std::string::npos);

    CliResult mask = run_cli("check mask");
    CHECK(mask.exit_code == 0);

    CliResult grad = run_cli("check grad");
    CHECK(grad.exit_code == 0);
    CHECK(grad.out.find("grad.max_rel_err: PASS") != std::string::npos);
  }

  TEST_CASE("attention dumps stream readable blocks") {
    TempDir dir;
    REQUIRE(run_cli("train --set total_steps=0 --set train_count=64 "
                    "--set eval_count=8 --out '" +
                    dir.path.string() + "'").exit_code == 0);
    fs::path ckpt = dir.path / "checkpoint-000000.atnl";

    CliResult dump = run_cli("dump-attention '" + ckpt.string() +
                             "' --line 'a b c'");
    CHECK(dump.exit_code == 0);
    CHECK(dump.out.find("layer=0 head=0 kind=enc_self") != std::string::npos);
    CHECK(dump.out.find("kind=dec_self") != std::string::npos);
    CHECK(dump.out.find("kind=cross") != std::string::npos);
    CHECK(dump.out.find("tokens_q: a b c") != std::string::npos);

    std::string oversize;
    for (int i = 0; i < 70; ++i) oversize += "a ";
    CliResult too_long = run_cli("dump-attention '" + ckpt.string() +
                                 "' --line '" + oversize + "'");
    CHECK(too_long.exit_code == 1);
  }

  TEST_CASE("a malformed log level env var is rejected up front") {
    CliResult r = run_cli("check pe", "ATNL_LOG=banana");
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("ATNL_LOG") != std::string::npos);

    CliResult quiet = run_cli("check pe", "ATNL_LOG=error");
    CHECK(quiet.exit_code == 0);
  }
}
