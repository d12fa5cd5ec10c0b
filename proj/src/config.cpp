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

#include "ditsim/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace ditsim {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void bad_key(const std::string& section, const std::string& key) {
  throw ValidationError("unknown config key [" + section + "] " + key);
}

[[noreturn]] void bad_value(const std::string& section, const std::string& key,
                            const std::string& value) {
  throw ValidationError("invalid value for [" + section + "] " + key + ": " +
                        value);
}

long long parse_int(const std::string& section, const std::string& key,
                    const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) bad_value(section, key, value);
    return v;
  } catch (const ValidationError&) {
    throw;
  } catch (...) {
    bad_value(section, key, value);
  }
}

double parse_double(const std::string& section, const std::string& key,
                    const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) bad_value(section, key, value);
    return v;
  } catch (const ValidationError&) {
    throw;
  } catch (...) {
    bad_value(section, key, value);
  }
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string trimmed = trim(line);
    if (trimmed.empty() || trimmed[0] == '#' || trimmed[0] == ';') continue;
    if (trimmed.front() == '[') {
      if (trimmed.back() != ']') {
        throw ValidationError("malformed section header at line " +
                              std::to_string(line_no));
      }
      section = trim(trimmed.substr(1, trimmed.size() - 2));
      if (section != "model" && section != "workload" && section != "cluster" &&
          section != "plan" && section != "compute_model" &&
          section != "execute") {
        throw ValidationError("unknown config section [" + section + "]");
      }
      continue;
    }
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("expected key = value at line " +
                            std::to_string(line_no));
    }
    const std::string key = trim(trimmed.substr(0, eq));
    const std::string value = trim(trimmed.substr(eq + 1));
    if (section.empty()) {
      throw ValidationError("key '" + key + "' appears before any section");
    }

    if (section == "model") {
      if (key == "layers") cfg.model.layers = int(parse_int(section, key, value));
      else if (key == "hidden_size") cfg.model.hidden_size = int(parse_int(section, key, value));
      else if (key == "heads") cfg.model.heads = int(parse_int(section, key, value));
      else if (key == "param_count") cfg.model.param_count = parse_int(section, key, value);
      else if (key == "latent_channels") cfg.model.latent_channels = int(parse_int(section, key, value));
      else if (key == "mlp_ratio") cfg.model.mlp_ratio = parse_double(section, key, value);
      else if (key == "bytes_per_element") cfg.model.bytes_per_element = int(parse_int(section, key, value));
      else bad_key(section, key);
    } else if (section == "workload") {
      if (key == "seq_len") cfg.workload.seq_len = parse_int(section, key, value);
      else if (key == "diffusion_steps") cfg.workload.diffusion_steps = int(parse_int(section, key, value));
      else if (key == "warmup_steps") cfg.workload.warmup_steps = int(parse_int(section, key, value));
      else if (key == "step_size") cfg.workload.step_size = parse_double(section, key, value);
      else bad_key(section, key);
    } else if (section == "cluster") {
      if (key == "device_count") cfg.cluster.device_count = int(parse_int(section, key, value));
      else if (key == "device_flops") cfg.cluster.device_flops = parse_double(section, key, value);
      else if (key == "link_bandwidth") cfg.cluster.link_bandwidth = parse_double(section, key, value);
      else if (key == "link_latency") cfg.cluster.link_latency = parse_double(section, key, value);
      else bad_key(section, key);
    } else if (section == "plan") {
      if (key == "strategy") {
        auto s = strategy_from_name(value);
        if (!s) bad_value(section, key, value);
        cfg.plan.strategy = *s;
      } else if (key == "degree") cfg.plan.degree = int(parse_int(section, key, value));
      else if (key == "patches") cfg.plan.patches = int(parse_int(section, key, value));
      else if (key == "ulysses_degree") cfg.plan.ulysses_degree = int(parse_int(section, key, value));
      else if (key == "ring_degree") cfg.plan.ring_degree = int(parse_int(section, key, value));
      else if (key == "cfg_degree") cfg.plan.cfg_degree = int(parse_int(section, key, value));
      else bad_key(section, key);
    } else if (section == "compute_model") {
      if (key == "attention_coeff") cfg.compute.attention_coeff = parse_double(section, key, value);
      else if (key == "linear_coeff") cfg.compute.linear_coeff = parse_double(section, key, value);
      else if (key == "per_message_overhead") cfg.compute.per_message_overhead_s = parse_double(section, key, value);
      else if (key == "update_cost_per_element") cfg.compute.update_cost_per_element = parse_double(section, key, value);
      else if (key == "comm_mode") {
        auto m = cost_mode_from_name(value);
        if (!m) bad_value(section, key, value);
        cfg.comm_mode = *m;
      } else bad_key(section, key);
    } else {  // execute
      if (key == "seed") cfg.seed = std::uint64_t(parse_int(section, key, value));
      else bad_key(section, key);
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << "[model]\n";
  os << "layers = " << cfg.model.layers << '\n';
  os << "hidden_size = " << cfg.model.hidden_size << '\n';
  os << "heads = " << cfg.model.heads << '\n';
  os << "param_count = " << cfg.model.param_count << '\n';
  os << "latent_channels = " << cfg.model.latent_channels << '\n';
  os << "mlp_ratio = " << fmt_double(cfg.model.mlp_ratio) << '\n';
  os << "bytes_per_element = " << cfg.model.bytes_per_element << '\n';
  os << "\n[workload]\n";
  os << "seq_len = " << cfg.workload.seq_len << '\n';
  os << "diffusion_steps = " << cfg.workload.diffusion_steps << '\n';
  os << "warmup_steps = " << cfg.workload.warmup_steps << '\n';
  os << "step_size = " << fmt_double(cfg.workload.step_size) << '\n';
  os << "\n[cluster]\n";
  os << "device_count = " << cfg.cluster.device_count << '\n';
  os << "device_flops = " << fmt_double(cfg.cluster.device_flops) << '\n';
  os << "link_bandwidth = " << fmt_double(cfg.cluster.link_bandwidth) << '\n';
  os << "link_latency = " << fmt_double(cfg.cluster.link_latency) << '\n';
  os << "\n[plan]\n";
  os << "strategy = " << strategy_name(cfg.plan.strategy) << '\n';
  os << "degree = " << cfg.plan.degree << '\n';
  os << "patches = " << cfg.plan.patches << '\n';
  os << "ulysses_degree = " << cfg.plan.ulysses_degree << '\n';
  os << "ring_degree = " << cfg.plan.ring_degree << '\n';
  os << "cfg_degree = " << cfg.plan.cfg_degree << '\n';
  os << "\n[compute_model]\n";
  os << "attention_coeff = " << fmt_double(cfg.compute.attention_coeff) << '\n';
  if (cfg.compute.linear_coeff) {
    os << "linear_coeff = " << fmt_double(*cfg.compute.linear_coeff) << '\n';
  }
  os << "per_message_overhead = "
     << fmt_double(cfg.compute.per_message_overhead_s) << '\n';
  os << "update_cost_per_element = "
     << fmt_double(cfg.compute.update_cost_per_element) << '\n';
  os << "comm_mode = " << cost_mode_name(cfg.comm_mode) << '\n';
  os << "\n[execute]\n";
  os << "seed = " << cfg.seed << '\n';
  return os.str();
}

}  // namespace ditsim
