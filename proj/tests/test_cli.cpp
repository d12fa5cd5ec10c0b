// Copyright 2026 The ditsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace {

struct CliResult {
  int exit_code = -1;
  std::string output;
};

// Runs the installed binary and captures stdout+stderr.
CliResult run_cli(const std::string& args) {
  const std::string out_path = "/tmp/ditsim_cli_out.txt";
  const std::string cmd =
      std::string(DITSIM_CLI_PATH) + " " + args + " > " + out_path + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult result;
  result.exit_code = WEXITSTATUS(status);
  std::ifstream in(out_path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  result.output = buffer.str();
  return result;
}

std::string write_config(const std::string& name, int devices, int layers,
                         const std::string& strategy, int patches,
                         int warmup = 0, int steps = 4) {
  const std::string path = "/tmp/" + name;
  std::ofstream out(path);
  out << "[model]\nlayers = " << layers
      << "\nhidden_size = 16\nheads = 4\nparam_count = 1000\n"
      << "[workload]\nseq_len = 64\ndiffusion_steps = " << steps
      << "\nwarmup_steps = " << warmup << "\nstep_size = 0.1\n"
      << "[cluster]\ndevice_count = " << devices
      << "\ndevice_flops = 1e9\nlink_bandwidth = 1e8\nlink_latency = 0\n"
      << "[plan]\nstrategy = " << strategy << "\npatches = " << patches
      << "\n[compute_model]\nper_message_overhead = 0\n";
  return path;
}

int count_lines(const std::string& text) {
  int lines = 0;
  for (char c : text) {
    if (c == '\n') ++lines;
  }
  return lines;
}

}  // namespace

TEST_CASE("cost emits the fixed csv schema and ranks the pipeline first") {
  const std::string cfg = write_config("cli_cost.cfg", 8, 28, "pipefusion", 8);
  CliResult r = run_cli("--config " + cfg + " cost --mode paper-approx");
  CHECK(r.exit_code == 0);
  CHECK(r.output.rfind("strategy,elements_total,bytes_total,overlappable,"
                       "param_elements,kv_buffer_elements\n",
                       0) == 0);
  // First data row is the patch pipeline (N=8 < 2L=56).
  const auto first_row = r.output.find('\n') + 1;
  CHECK(r.output.compare(first_row, 10, "pipefusion") == 0);
}

TEST_CASE("cost on a single device reports zero traffic") {
  const std::string cfg = write_config("cli_cost1.cfg", 1, 4, "pipefusion", 1);
  CliResult r = run_cli("--config " + cfg + " cost");
  CHECK(r.exit_code == 0);
  std::istringstream lines(r.output);
  std::string line;
  std::getline(lines, line);  // header
  while (std::getline(lines, line)) {
    const auto comma = line.find(',');
    CHECK(line.compare(comma, 3, ",0,") == 0);
  }
}

TEST_CASE("outputs are byte-deterministic across runs") {
  const std::string cfg = write_config("cli_det.cfg", 4, 4, "pipefusion", 4, 1);
  CliResult a = run_cli("--config " + cfg + " cost --format json");
  CliResult b = run_cli("--config " + cfg + " cost --format json");
  CHECK(a.exit_code == 0);
  CHECK(a.output == b.output);

  CliResult s1 = run_cli("schedule --n 4 --m 4 --steps 2 --warmup 0");
  CliResult s2 = run_cli("schedule --n 4 --m 4 --steps 2 --warmup 0");
  CHECK(s1.output == s2.output);
}

TEST_CASE("schedule gantt shows one row per device") {
  CliResult r = run_cli("schedule --n 4 --m 4 --steps 2 --warmup 0 --gantt");
  CHECK(r.exit_code == 0);
  CHECK(count_lines(r.output) == 4);
  CHECK(r.output.find("d0 |") != std::string::npos);
}

TEST_CASE("usage and validation failures exit with code two") {
  CHECK(run_cli("schedule --n 4 --m 4 --steps 2 --warmup 3").exit_code == 2);
  CHECK(run_cli("bogus-subcommand").exit_code == 2);
  CHECK(run_cli("sweep bogus-kind").exit_code == 2);
  const std::string cfg =
      write_config("cli_bad.cfg", 3, 4, "pipefusion", 5);  // 64 % 5 != 0
  CliResult r = run_cli("--config " + cfg + " execute");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("divisible") != std::string::npos);
}

TEST_CASE("sweeps cover the default search spaces") {
  const std::string cfg = write_config("cli_sweep.cfg", 4, 4, "pipefusion", 4);
  CliResult patch = run_cli("--config " + cfg + " sweep patch-number");
  CHECK(patch.exit_code == 0);
  CHECK(count_lines(patch.output) == 6);  // header + {2,4,8,16,32}
  CHECK(patch.output.rfind("patches,makespan_s\n", 0) == 0);

  CliResult warm = run_cli("--config " + cfg + " sweep warmup --values 0,1,2");
  CHECK(warm.exit_code == 0);
  CHECK(count_lines(warm.output) == 4);

  CliResult dev = run_cli("--config " + cfg +
                          " sweep devices --values 1,2,4 "
                          "--strategies tensor_parallel,pipefusion");
  CHECK(dev.exit_code == 0);
  CHECK(count_lines(dev.output) == 7);
}

TEST_CASE("execute compare emits all three divergences") {
  const std::string cfg =
      write_config("cli_exec.cfg", 4, 4, "pipefusion", 4, 1, 6);
  CliResult r = run_cli("--config " + cfg + " execute --compare");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("\"serial\": 0.0") != std::string::npos);
  CHECK(r.output.find("\"pipefusion\"") != std::string::npos);
  CHECK(r.output.find("\"distrifusion\"") != std::string::npos);
}

TEST_CASE("full warmup zeroes the reported divergences") {
  const std::string cfg =
      write_config("cli_exec_ws.cfg", 4, 4, "pipefusion", 4, 6, 6);
  CliResult r = run_cli("--config " + cfg + " execute --compare");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("\"pipefusion\": 0.0") != std::string::npos);
  CHECK(r.output.find("\"distrifusion\": 0.0") != std::string::npos);
}

TEST_CASE("automatic warmup selection lands in the manifest") {
  const std::string cfg =
      write_config("cli_autow.cfg", 4, 4, "pipefusion", 4, 0, 8);
  CliResult r = run_cli("--config " + cfg +
                        " execute --strategy pipefusion --auto-warmup 0.05");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("\"auto_warmup\"") != std::string::npos);
  CHECK(r.output.find("\"threshold_met\"") != std::string::npos);
}

TEST_CASE("numeric blowups exit with code one") {
  const std::string path = "/tmp/cli_blowup.cfg";
  std::ofstream out(path);
  out << "[model]\nlayers = 2\nhidden_size = 16\nheads = 4\n"
      << "[workload]\nseq_len = 16\ndiffusion_steps = 4\nstep_size = 1e300\n"
      << "[cluster]\ndevice_count = 1\ndevice_flops = 1e9\n"
      << "link_bandwidth = 1e9\n[plan]\nstrategy = pipefusion\npatches = 1\n";
  out.close();
  CliResult r = run_cli("--config " + path + " execute --strategy serial");
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("non-finite") != std::string::npos);
}

TEST_CASE("trajectory dumps hold one row per retained state") {
  const std::string cfg =
      write_config("cli_traj.cfg", 1, 2, "pipefusion", 1, 0, 3);
  CliResult r = run_cli("--config " + cfg +
                        " execute --strategy serial "
                        "--dump-trajectory /tmp/ditsim_traj.csv");
  CHECK(r.exit_code == 0);
  std::ifstream traj("/tmp/ditsim_traj.csv");
  REQUIRE(traj.good());
  std::ostringstream buffer;
  buffer << traj.rdbuf();
  CHECK(count_lines(buffer.str()) == 4);  // initial + 3 steps
}

TEST_CASE("simulate writes a trace and a summary") {
  const std::string cfg = write_config("cli_sim.cfg", 4, 4, "pipefusion", 4, 1);
  CliResult r = run_cli("--config " + cfg +
                        " simulate --trace /tmp/ditsim_trace.json");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("\"makespan_s\"") != std::string::npos);
  std::ifstream trace("/tmp/ditsim_trace.json");
  REQUIRE(trace.good());
  std::ostringstream buffer;
  buffer << trace.rdbuf();
  CHECK(buffer.str().find("\"events\"") != std::string::npos);
  CHECK(buffer.str().find("\"start_us\"") != std::string::npos);
}

TEST_CASE("bundled scenario configs parse and run") {
  CliResult r = run_cli(std::string("--config ") + DITSIM_CONFIG_DIR +
                        "/pixart_like_8xl40.cfg cost");
  CHECK(r.exit_code == 0);
}
