// Drives the kraken executable as a user would.

#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path kTmp = KRAKEN_TEST_TMP;

struct Run {
  int code;
  std::string out;
};

Run kraken(const std::string& args) {
  const std::string cmd = std::string("\"") + KRAKEN_CLI + "\" " + args + " 2>" +
                          (kTmp / "stderr.txt").string();
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  const int status = ::pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string last_stderr() { return slurp(kTmp / "stderr.txt"); }

// Every file under a, compared byte for byte with its counterpart under b.
bool same_tree(const fs::path& a, const fs::path& b) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    if (!fs::exists(b / rel) || slurp(e.path()) != slurp(b / rel)) {
      MESSAGE("differs: " << rel.string());
      return false;
    }
    ++n;
  }
  for (const auto& e : fs::recursive_directory_iterator(b)) {
    if (e.is_regular_file() && !fs::exists(a / fs::relative(e.path(), b))) return false;
  }
  return n > 0;
}

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

struct Fresh {
  Fresh() {
    fs::remove_all(kTmp);
    fs::create_directories(kTmp);
  }
};

}  // namespace

TEST_CASE_FIXTURE(Fresh, "chained verbs reproduce the pipeline byte for byte") {
  const std::string d = kTmp.string();
  REQUIRE(kraken("pipeline --scenario argon --out " + d + "/run").code == 0);
  REQUIRE(kraken("simulate --scenario argon --out " + d + "/chain/simulate").code == 0);
  REQUIRE(kraken("extract " + d + "/chain/simulate --out " + d + "/chain/extract").code == 0);
  REQUIRE(kraken("assemble " + d + "/chain/extract --out " + d + "/chain/assemble").code == 0);
  REQUIRE(kraken("reconstruct --scenario argon " + d + "/chain/extract --out " + d + "/chain/reconstruct").code == 0);
  REQUIRE(kraken("compare " + d + "/chain/reconstruct " + d + "/chain/simulate/truth.dm --out " + d +
                 "/chain/compare")
              .code == 0);
  for (const char* stage : {"simulate", "extract", "assemble", "reconstruct", "compare"}) {
    INFO(stage);
    CHECK(same_tree(kTmp / "run" / stage, kTmp / "chain" / stage));
  }
}

TEST_CASE_FIXTURE(Fresh, "reruns are byte identical and seeds matter") {
  const std::string d = kTmp.string();
  REQUIRE(kraken("simulate --out " + d + "/a").code == 0);
  REQUIRE(kraken("simulate --out " + d + "/b").code == 0);
  CHECK(same_tree(kTmp / "a", kTmp / "b"));
  REQUIRE(kraken("simulate --seed 7 --out " + d + "/c").code == 0);
  CHECK(slurp(kTmp / "a/spectrogram_03.csv") != slurp(kTmp / "c/spectrogram_03.csv"));
  CHECK(fs::exists(kTmp / "a/spectrogram_06.csv"));
  CHECK_FALSE(fs::exists(kTmp / "a/spectrogram_07.csv"));
}

TEST_CASE_FIXTURE(Fresh, "config file, base scenario and flag precedence") {
  const std::string d = kTmp.string();
  write(kTmp / "cfg.json", R"({"base": "argon", "seed": 11, "probe": {"beat_energies": [0.0]}})");
  REQUIRE(kraken("simulate --config " + d + "/cfg.json --seed 12 --out " + d + "/s").code == 0);
  const std::string manifest = slurp(kTmp / "s/manifest.json");
  CHECK(manifest.find("\"kind\": \"argon\"") != std::string::npos);
  CHECK(manifest.find("\"seed\": 12") != std::string::npos);
  CHECK(fs::exists(kTmp / "s/spectrogram_00.csv"));
  CHECK_FALSE(fs::exists(kTmp / "s/spectrogram_01.csv"));
  // --scenario overrides the config's base
  REQUIRE(kraken("simulate --scenario helium --config " + d + "/cfg.json --out " + d + "/h").code == 0);
  CHECK(slurp(kTmp / "h/manifest.json").find("\"kind\": \"helium\"") != std::string::npos);
}

TEST_CASE_FIXTURE(Fresh, "metrics and compare") {
  const std::string d = kTmp.string();
  REQUIRE(kraken("simulate --out " + d + "/s").code == 0);
  const Run m = kraken("metrics " + d + "/s/truth.dm");
  REQUIRE(m.code == 0);
  const auto mj = nlohmann::json::parse(m.out);
  CHECK(mj["purity"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mj["concurrence"].get<double>() == 0.0);
  const Run c = kraken("compare " + d + "/s/truth.dm " + d + "/s/truth.dm --out " + d + "/c");
  REQUIRE(c.code == 0);
  CHECK(nlohmann::json::parse(c.out)["fidelity"].get<double>() == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE_FIXTURE(Fresh, "exit codes") {
  const std::string d = kTmp.string();
  CHECK(kraken("").code == 2);
  CHECK(kraken("simulate --scenario neon").code == 2);
  write(kTmp / "bad.json", R"({"noise": {"scale": -0.5}})");
  CHECK(kraken("simulate --config " + d + "/bad.json --out " + d + "/x").code == 2);
  CHECK(last_stderr().find("noise.scale") != std::string::npos);
  write(kTmp / "broken.json", "{");
  CHECK(kraken("simulate --config " + d + "/broken.json --out " + d + "/x").code == 2);
  CHECK(kraken("extract " + d + "/missing --out " + d + "/x").code == 2);

  REQUIRE(kraken("simulate --out " + d + "/s").code == 0);
  REQUIRE(kraken("extract " + d + "/s/spectrogram_03.csv --out " + d + "/e").code == 0);
  CHECK(kraken("assemble " + d + "/e --out " + d + "/a").code == 2);
  CHECK(last_stderr().find("zero-beat") != std::string::npos);

  // an indefinite raw matrix is a numerical failure
  REQUIRE(kraken("extract " + d + "/s --out " + d + "/e2").code == 0);
  REQUIRE(kraken("assemble " + d + "/e2 --out " + d + "/a2").code == 0);
  CHECK(kraken("metrics " + d + "/a2/raw.dm").code == 3);
  // so is a sampler that cannot be tuned
  write(kTmp / "untuned.json",
        R"({"estimator": {"n_warmup": 0, "n_samples": 100, "step_size": 5.0}})");
  CHECK(kraken("reconstruct --config " + d + "/untuned.json " + d + "/e2 --out " + d + "/r").code == 3);
}

TEST_CASE_FIXTURE(Fresh, "response flag lowers reconstructed purity") {
  const std::string d = kTmp.string();
  REQUIRE(kraken("simulate --out " + d + "/s").code == 0);
  REQUIRE(kraken("extract " + d + "/s --out " + d + "/e").code == 0);
  const Run with = kraken("reconstruct " + d + "/e --out " + d + "/r1");
  const Run without = kraken("reconstruct --no-response " + d + "/e --out " + d + "/r2");
  REQUIRE(with.code == 0);
  REQUIRE(without.code == 0);
  auto purity_of = [](const std::string& json) {
    return nlohmann::json::parse(json)["purity_mean"].get<double>();
  };
  CHECK(purity_of(with.out) >= 0.98);
  CHECK(purity_of(without.out) < purity_of(with.out));
}
