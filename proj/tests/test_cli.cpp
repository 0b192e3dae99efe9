#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kCli = LATENTODE_CLI_PATH;

fs::path work_root() {
  static fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "lode_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

int run_cli(const std::string& args, std::string* output = nullptr) {
  static int counter = 0;
  const std::string log = (work_root() / ("out" + std::to_string(counter++) + ".log")).string();
  const std::string cmd = kCli + " " + args + " >" + log + " 2>&1";
  const int rc = std::system(cmd.c_str());
  if (output) {
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    *output = ss.str();
  }
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// tiny-but-real architecture flags used for fast training runs
const std::string kTinyNode =
    " --encoder-hidden 6 --field-hidden 5 --field-layers 1 --readout-hidden 5 --substeps 1";

}  // namespace

TEST_CASE("exit code matrix: usage errors return 2") {
  REQUIRE(run_cli("") == 2);                             // no subcommand
  REQUIRE(run_cli("frobnicate") == 2);                   // unknown subcommand
  REQUIRE(run_cli("generate --out x") == 2);             // missing --kind
  REQUIRE(run_cli("generate --kind bogus --out x") == 2);
  REQUIRE(run_cli("generate --kind spiral --n 11 --out x") == 2);  // odd n
  REQUIRE(run_cli("train --model node --data /nonexistent --out x") == 2);
  REQUIRE(run_cli("train --model bogus --data /nonexistent --out x") == 2);
  REQUIRE(run_cli("eval --experiments nothing --rmse --root /nonexistent") == 2);
  std::string help;
  REQUIRE(run_cli("--help", &help) == 0);
  REQUIRE(help.find("generate") != std::string::npos);
  REQUIRE(help.find("train") != std::string::npos);
  REQUIRE(help.find("eval") != std::string::npos);
}

TEST_CASE("generate: deterministic bundles and spring mixes") {
  const fs::path root = work_root();
  const std::string d1 = (root / "spiral_a").string();
  const std::string d2 = (root / "spiral_b").string();
  REQUIRE(run_cli("generate --kind spiral --n 10 --seq-len 30 --seed 1 --out " + d1) == 0);
  REQUIRE(run_cli("generate --kind spiral --n 10 --seq-len 30 --seed 1 --out " + d2) == 0);
  for (const char* f : {"meta.csv", "times.csv", "values.csv", "manifest.json"})
    REQUIRE(slurp(d1 + "/" + f) == slurp(d2 + "/" + f));  // byte-identical

  const std::string mix_dir = (root / "spring123").string();
  REQUIRE(run_cli("generate --kind spring --mix 1,2,3 --n 12 --seed 2 --out " + mix_dir) == 0);
  const std::string meta = slurp(mix_dir + "/meta.csv");
  REQUIRE(meta.find("spring1") != std::string::npos);
  REQUIRE(meta.find("spring2") != std::string::npos);
  REQUIRE(meta.find("spring3") != std::string::npos);

  // re-running from the resolved config reproduces the bundle byte-for-byte
  const std::string d3 = (root / "spiral_c").string();
  REQUIRE(run_cli("generate --config " + d1 + "/resolved_config.json --out " + d3) == 0);
  REQUIRE(slurp(d1 + "/values.csv") == slurp(d3 + "/values.csv"));
}

TEST_CASE("generate: unknown config keys are rejected") {
  const fs::path root = work_root();
  const std::string cfg = (root / "bad_config.json").string();
  std::ofstream(cfg) << "{\"kind\": \"spiral\", \"frobnicate\": 1}";
  std::string out;
  REQUIRE(run_cli("generate --config " + cfg + " --out " + (root / "x").string(), &out) == 2);
  REQUIRE(out.find("frobnicate") != std::string::npos);
}

TEST_CASE("train, resume and eval round trip") {
  const fs::path root = work_root();
  const std::string data = (root / "exp1" / "data").string();
  REQUIRE(run_cli("generate --kind spring --mix 1 --n 10 --seed 3 --out " + data) == 0);

  const std::string node_dir = (root / "exp1" / "node").string();
  const std::string base_dir = (root / "exp1" / "baseline").string();
  REQUIRE(run_cli("train --model node --data " + data + " --out " + node_dir +
                  " --epochs 3 --batch 4 --seed 5 --subsample 10" + kTinyNode) == 0);
  REQUIRE(fs::exists(node_dir + "/checkpoint.lode"));
  REQUIRE(fs::exists(node_dir + "/resolved_config.json"));
  {
    std::ifstream log(node_dir + "/train_log.csv");
    std::string line;
    std::getline(log, line);
    REQUIRE(line == "epoch,train_loss,val_loss,seconds");
    int rows = 0;
    while (std::getline(log, line))
      if (!line.empty()) ++rows;
    REQUIRE(rows == 3);  // one row per epoch
  }

  REQUIRE(run_cli("train --model baseline --data " + data + " --out " + base_dir +
                  " --epochs 3 --batch 4 --seed 5 --subsample 10 --hidden-size 6") == 0);

  SECTION("baseline loss column is RMSE-based (small positive values)") {
    std::ifstream log(base_dir + "/train_log.csv");
    std::string line;
    std::getline(log, line);
    std::getline(log, line);
    std::stringstream ss(line);
    std::string epoch, train_loss;
    std::getline(ss, epoch, ',');
    std::getline(ss, train_loss, ',');
    const double v = std::stod(train_loss);
    REQUIRE(v > 0.0);
    REQUIRE(v < 10.0);  // an RMSE, not a -ELBO in the hundreds
  }

  SECTION("resume continues epoch numbering without gaps, bitwise") {
    // uninterrupted 5-epoch reference
    const std::string ref_dir = (root / "exp1" / "node_ref").string();
    REQUIRE(run_cli("train --model node --data " + data + " --out " + ref_dir +
                    " --epochs 5 --batch 4 --seed 5 --subsample 10" + kTinyNode) == 0);
    // resume the 3-epoch run to 5
    REQUIRE(run_cli("train --model node --data " + data + " --out " + node_dir +
                    " --epochs 5 --batch 4 --seed 5 --subsample 10 --resume " + node_dir +
                    "/checkpoint.lode" + kTinyNode) == 0);
    std::ifstream a(node_dir + "/train_log.csv"), b(ref_dir + "/train_log.csv");
    std::string la, lb;
    std::getline(a, la);
    std::getline(b, lb);
    int epoch = 0;
    while (std::getline(a, la) && std::getline(b, lb)) {
      ++epoch;
      // identical epoch numbers and losses; seconds may differ
      auto cut = [](const std::string& s) { return s.substr(0, s.rfind(',')); };
      REQUIRE(cut(la) == cut(lb));
    }
    REQUIRE(epoch == 5);
  }

  SECTION("eval produces the report files") {
    const std::string out = (root / "reports").string();
    REQUIRE(run_cli("eval --root " + (root).string() + " --experiments exp1 --rmse --timing "
                    "--reconstruct --extrapolate -0.5,1.5 --extrap-points 40 --out " + out) == 0);
    const std::string table = slurp(out + "/rmse_table.csv");
    REQUIRE(table.find("experiment,node,baseline") == 0);
    REQUIRE(table.find("exp1,") != std::string::npos);
    const std::string timing = slurp(out + "/timing.csv");
    REQUIRE(timing.find("exp1,") != std::string::npos);
    const std::string recon = slurp(out + "/recon_exp1_0.csv");
    REQUIRE(recon.find(",observed") != std::string::npos);
    REQUIRE(recon.find(",extrapolated") != std::string::npos);
  }

  SECTION("re-running train from its resolved config reproduces the losses") {
    const std::string redo = (root / "exp1" / "node_redo").string();
    REQUIRE(run_cli("train --config " + node_dir + "/resolved_config.json --out " + redo) == 0);
    std::ifstream a(node_dir + "/train_log.csv"), b(redo + "/train_log.csv");
    std::string la, lb;
    while (std::getline(a, la) && std::getline(b, lb)) {
      auto cut = [](const std::string& s) { return s.substr(0, s.rfind(',')); };
      REQUIRE(cut(la) == cut(lb));  // identical up to the seconds column
    }
  }

  SECTION("eval with a missing checkpoint is a usage error") {
    std::string out;
    REQUIRE(run_cli("eval --root " + (root).string() +
                    " --experiments ghost --rmse --out " + (root / "r2").string(), &out) == 2);
    REQUIRE(out.find("missing checkpoint") != std::string::npos);
  }
}

TEST_CASE("eval --latent emits labeled rows for every spring kind") {
  const fs::path root = work_root();
  const std::string data = (root / "exp123" / "data").string();
  REQUIRE(run_cli("generate --kind spring --mix 1,2,3 --n 21 --seed 4 --out " + data) == 0);
  const std::string node_dir = (root / "exp123" / "node").string();
  REQUIRE(run_cli("train --model node --data " + data + " --out " + node_dir +
                  " --epochs 2 --batch 6 --seed 6 --subsample 8" + kTinyNode) == 0);
  const std::string out = (root / "reports123").string();
  REQUIRE(run_cli("eval --root " + root.string() + " --experiments exp123 --latent --out " + out) ==
          0);
  const std::string latent = slurp(out + "/latent_exp123.csv");
  REQUIRE(latent.find("# explained_variance,") == 0);
  REQUIRE(latent.find("spring1") != std::string::npos);
  REQUIRE(latent.find("spring2") != std::string::npos);
  REQUIRE(latent.find("spring3") != std::string::npos);
}

TEST_CASE("divergent training aborts with exit code 1") {
  const fs::path root = work_root();
  const std::string data = (root / "diverge" / "data").string();
  REQUIRE(run_cli("generate --kind spring --mix 1 --n 10 --seed 9 --out " + data) == 0);
  std::string out;
  const int rc = run_cli("train --model node --data " + data + " --out " +
                             (root / "diverge" / "node").string() +
                             " --epochs 40 --batch 4 --seed 2 --subsample 10 --lr 60" + kTinyNode,
                         &out);
  REQUIRE(rc == 1);
}
