#include "egox/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "egox/error.hpp"
#include "egox/gga.hpp"

namespace egox {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || p != value.data() + value.size())
    throw Error("config: bad value '" + std::string(value) + "' for " + std::string(key));
  return out;
}

}  // namespace

const std::vector<std::string>& Config::keys() {
  static const std::vector<std::string> k = {"momentum", "lambda_g", "eps_g",     "splat_radius", "grid",
                                             "tau_sim",  "steps",    "alpha_mix", "seed"};
  return k;
}

void Config::set(std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "momentum") {
    momentum = parse_number<double>(key, value);
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("config: momentum must be in [0, 1)");
  } else if (key == "lambda_g") {
    lambda_g = parse_number<double>(key, value);
    if (!(lambda_g > 0.0)) throw Error("config: lambda_g must be > 0");
  } else if (key == "eps_g") {
    eps_g = parse_number<double>(key, value);
    if (!(eps_g > 0.0)) throw Error("config: eps_g must be > 0");
  } else if (key == "splat_radius") {
    splat_radius = parse_number<int>(key, value);
    if (splat_radius < 0) throw Error("config: splat_radius must be >= 0");
  } else if (key == "grid") {
    gga::PatchGrid::parse(value);
    grid = std::string(value);
  } else if (key == "tau_sim") {
    tau_sim = parse_number<double>(key, value);
    if (!(tau_sim >= -1.0 && tau_sim <= 1.0)) throw Error("config: tau_sim must be in [-1, 1]");
  } else if (key == "steps") {
    steps = parse_number<int>(key, value);
    if (steps < 1) throw Error("config: steps must be >= 1");
  } else if (key == "alpha_mix") {
    alpha_mix = parse_number<double>(key, value);
  } else if (key == "seed") {
    seed = parse_number<std::uint64_t>(key, value);
  } else {
    throw Error("config: unknown key '" + std::string(key) + "'");
  }
}

Config Config::parse(std::string_view text) {
  Config cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body = line;
    body = trim(body.substr(0, body.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw Error("config line " + std::to_string(line_no) + ": expected key = value");
    cfg.set(trim(body.substr(0, eq)), body.substr(eq + 1));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace egox
