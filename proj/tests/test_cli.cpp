#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace {

const char* cli_path() { return DPRQKD_CLI_PATH; }

int run_cli(const std::string& args) {
  const std::string cmd = std::string(cli_path()) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

size_t count_lines(const std::string& text) {
  size_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

struct TempFile {
  explicit TempFile(std::string name) : path(std::move(name)) {}
  ~TempFile() { std::remove(path.c_str()); }
  std::string path;
};

}  // namespace

TEST_CASE("rate-sweep emits one row per protocol and axis point") {
  TempFile out("cli_sweep.csv");
  REQUIRE(run_cli("rate-sweep --loss-db 5:40:5 --protocol dpts,dps,cow "
                  "--engine analytic --out " + out.path) == 0);
  const std::string text = slurp(out.path);
  // 8 loss points x 3 protocols + header.
  CHECK(count_lines(text) == 25);
  CHECK(text.rfind("protocol,loss_db,distance_km,r_sift_hz,qber,", 0) == 0);
}

TEST_CASE("distance axis hits the fiber-spool grid") {
  TempFile out("cli_dist.csv");
  REQUIRE(run_cli("rate-sweep --distance-km 10:170:40 --protocol dpts "
                  "--engine analytic --out " + out.path) == 0);
  const std::string text = slurp(out.path);
  CHECK(count_lines(text) == 6);
  CHECK(text.find("dpts,2.2,10,") != std::string::npos);
  CHECK(text.find("dpts,37.4,170,") != std::string::npos);
}

TEST_CASE("exit codes distinguish validation from runtime errors") {
  // Invalid configuration value: exit 1.
  TempFile cfg("cli_bad.cfg");
  {
    std::ofstream os(cfg.path);
    os << "protocol = dpts\nmu = 9.0\n";
  }
  CHECK(run_cli("rate-sweep --config " + cfg.path) == 1);
  // Unknown protocol name: exit 1.
  CHECK(run_cli("rate-sweep --protocol nosuch") == 1);
  // Unknown config key: exit 1.
  TempFile cfg2("cli_badkey.cfg");
  {
    std::ofstream os(cfg2.path);
    os << "nope = 1\n";
  }
  CHECK(run_cli("rate-sweep --config " + cfg2.path) == 1);
  // Network failure (nothing listening, short timeout): exit 2.
  TempFile clicks("cli_noclicks.txt");
  {
    std::ofstream os(clicks.path);
    os << "# dprqkd clicks v1\n# slot_period_s=8.4e-10\n";
  }
  CHECK(run_cli("link --role bob --endpoint 127.0.0.1:1 --clicks " +
                clicks.path + " --timeout 0.2") == 2);
  // Happy path: exit 0.
  CHECK(run_cli("rate-sweep --loss-db 11:11:1 --protocol dpts") == 0);
}

TEST_CASE("simulate runs are reproducible byte for byte") {
  TempFile out1("cli_sim1.txt"), out2("cli_sim2.txt");
  TempFile clicks1("cli_clicks1.txt"), clicks2("cli_clicks2.txt");
  REQUIRE(run_cli("simulate --protocol dpts --loss-db 11 --pulses 300000 "
                  "--seed 9 --emit-clicks " + clicks1.path + " --out " +
                  out1.path) == 0);
  REQUIRE(run_cli("simulate --protocol dpts --loss-db 11 --pulses 300000 "
                  "--seed 9 --emit-clicks " + clicks2.path + " --out " +
                  out2.path) == 0);
  CHECK(slurp(clicks1.path) == slurp(clicks2.path));
  CHECK(!slurp(clicks1.path).empty());
  const auto strip_wall = [](std::string s) {
    const auto pos = s.find("pulses_per_second");
    return pos == std::string::npos ? s : s.substr(0, pos);
  };
  CHECK(strip_wall(slurp(out1.path)) == strip_wall(slurp(out2.path)));
}

TEST_CASE("stability batches are seeded and summarized") {
  TempFile out("cli_stab.csv");
  REQUIRE(run_cli("stability --protocol dpts --distance-km 50 --batches 10 "
                  "--batch-pulses 100000 --seed 4 --out " + out.path) == 0);
  const std::string text = slurp(out.path);
  CHECK(text.rfind("batch,qber,n_sifted", 0) == 0);
  CHECK(text.find("# mean_qber=") != std::string::npos);
  CHECK(text.find("# histogram bins=20") != std::string::npos);
  // Histogram counts sum to the batch count.
  size_t total = 0;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("# bin,", 0) == 0)
      total += std::stoul(line.substr(line.rfind(',') + 1));
  }
  CHECK(total == 10);
}

TEST_CASE("optimize-mu reports a csv row") {
  TempFile out("cli_opt.csv");
  REQUIRE(run_cli("optimize-mu --protocol dps --loss-db 11 --mu-min 0.02 "
                  "--mu-max 0.6 --out " + out.path) == 0);
  const std::string text = slurp(out.path);
  CHECK(text.rfind("protocol,loss_db,mu_opt,r_sk_opt,all_zero", 0) == 0);
  CHECK(text.find("dps,11,") != std::string::npos);
}

TEST_CASE("copropagation requires a classical channel") {
  CHECK(run_cli("copropagation --protocol dpts") == 1);
  TempFile cfg("cli_coprop.cfg");
  {
    std::ofstream os(cfg.path);
    os << "protocol = dpts\nfiber_length_km = 50\n"
       << "classical_launch_power_dbm = -27\n";
  }
  TempFile out("cli_coprop.csv");
  REQUIRE(run_cli("copropagation --config " + cfg.path +
                  " --distance-km 10:90:40 --out " + out.path) == 0);
  const std::string text = slurp(out.path);
  CHECK(text.find("background_rate_hz,classical_power_at_rx_dbm,sync_warning") !=
        std::string::npos);
  CHECK(count_lines(text) == 4);
}

TEST_CASE("golden csv regression on the default analytic sweep") {
  TempFile out("cli_golden.csv");
  REQUIRE(run_cli("rate-sweep --loss-db 5:20:5 --protocol dpts,cow "
                  "--engine analytic --out " + out.path) == 0);
  const std::string text = slurp(out.path);
  const std::string golden = slurp(std::string(GOLDEN_DIR) + "/rate_sweep.csv");
  REQUIRE(!golden.empty());
  CHECK(text == golden);
}
