#include "smile/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace smile {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::defaults() {
  // Every numeric default of the pipeline lives here; any entry can be
  // overridden from the config file or with --set on the command line.
  return from_string(R"(
[dataset]
format = tab_100k
kcore_user = 1
kcore_item = 1
test_fraction = 0.2

[promotion]
top_fraction = 0.01
retained_fraction = 0.05

[mf]
dim = 32
epochs = 50
lr = 0.005
reg = 0.02

[bpr]
dim = 32
epochs = 30
lr = 0.01
reg = 0.01

[env]
k = 10
candidate_fraction = 0.10
finetune_steps = 200
finetune_lr = 0.01
finetune_reg = 0.01

[tree]
depth = 2

[state]
reward_buckets = 10
reward_max = 0

[agent]
episodes = 500
episode_len = 0
eta = 0.001
gamma = 0.9
adopter_fraction = 0.05
filter_threshold = 3.5
filter_mode = mean
activation = softplus
mean_baseline = true
max_retries = 50
eval_episodes = 10
eval_greedy = true

[baseline]
episodes = 10

[eval]
k = 10
relevance_threshold = 4.0

[rq1]
counts = 0,50,100,150,200,250,300,350,400,450,500,550,600,650,700,750,800,850,900

[rq3]
depths = 1,2,3,4
trials = 10000
episodes = 30

[run]
seed = 7
)");
}

Config Config::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return from_string(ss.str());
}

Config Config::from_string(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line, section;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": empty key");
    cfg.values_[section.empty() ? key : section + "." + key] = value;
  }
  return cfg;
}

void Config::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

std::string Config::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end())
    throw std::runtime_error("missing config key: " + key);
  return it->second;
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key) const {
  const std::string v = get_string(key);
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw std::runtime_error("config key " + key + " is not a number: " + v);
  }
}

int64_t Config::get_int(const std::string& key) const {
  const std::string v = get_string(key);
  int64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw std::runtime_error("config key " + key + " is not an integer: " + v);
  return out;
}

uint64_t Config::get_uint(const std::string& key) const {
  int64_t v = get_int(key);
  if (v < 0)
    throw std::runtime_error("config key " + key + " must be nonnegative");
  return uint64_t(v);
}

bool Config::get_bool(const std::string& key) const {
  const std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::runtime_error("config key " + key + " is not a boolean: " + v);
}

std::vector<int64_t> Config::get_int_list(const std::string& key) const {
  const std::string v = get_string(key);
  std::vector<int64_t> out;
  std::istringstream in(v);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    int64_t x = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
    if (ec != std::errc() || p != tok.data() + tok.size())
      throw std::runtime_error("config key " + key + ": bad list entry " + tok);
    out.push_back(x);
  }
  return out;
}

void Config::apply_overrides(const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    size_t eq = o.find('=');
    if (eq == std::string::npos || eq == 0)
      throw std::runtime_error("override must be section.key=value: " + o);
    values_[trim(o.substr(0, eq))] = trim(o.substr(eq + 1));
  }
}

void Config::merge_from(const Config& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::string Config::dump() const {
  // std::map keeps keys sorted; group by section prefix.
  std::ostringstream out;
  std::string section;
  bool first = true;
  for (const auto& [k, v] : values_) {
    size_t dotpos = k.find('.');
    std::string sec = dotpos == std::string::npos ? "" : k.substr(0, dotpos);
    std::string name = dotpos == std::string::npos ? k : k.substr(dotpos + 1);
    if (sec != section || first) {
      if (!first) out << "\n";
      out << "[" << sec << "]\n";
      section = sec;
      first = false;
    }
    out << name << " = " << v << "\n";
  }
  return out.str();
}

}  // namespace smile
