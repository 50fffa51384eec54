#include "cfs/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace cfs {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorKind::ConfigError, msg); }

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) config_error(where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) config_error("unknown key '" + key + "' in " + where);
}

template <class T>
T get(const json& j, const std::string& key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    config_error(where + "." + key + ": " + e.what());
  }
}

template <class T>
T require(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) config_error("missing key '" + key + "' in " + where);
  return get<T>(j, key, where, T{});
}

std::string channel_kind_name(ChannelSpec::Kind k) {
  switch (k) {
    case ChannelSpec::Kind::SiteProjector: return "site_projector";
    case ChannelSpec::Kind::PositionGaussian: return "position_gaussian";
    case ChannelSpec::Kind::MomentumFunction: return "momentum_function";
  }
  return "?";
}

std::string window_kind_name(NoiseWindow::Kind k) {
  switch (k) {
    case NoiseWindow::Kind::Always: return "always";
    case NoiseWindow::Kind::Strip: return "strip";
    case NoiseWindow::Kind::Zero: return "zero";
  }
  return "?";
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& root) {
  check_keys(root, "config", {"lattice", "kernel", "time", "noise", "ensemble", "run"});
  ExperimentConfig c;

  const json lat = root.value("lattice", json::object());
  check_keys(lat, "lattice", {"sites", "spacing", "mass"});
  c.lattice.sites = get<int>(lat, "sites", "lattice", c.lattice.sites);
  c.lattice.spacing = get<double>(lat, "spacing", "lattice", c.lattice.spacing);
  c.lattice.mass = get<double>(lat, "mass", "lattice", c.lattice.mass);

  const json ker = root.value("kernel", json::object());
  check_keys(ker, "kernel", {"ell_min", "profile", "channels", "covariance", "symmetrize"});
  c.kernel.ell_min = get<double>(ker, "ell_min", "kernel", 1.0);
  c.kernel.profile = parse_profile_shape(get<std::string>(ker, "profile", "kernel", "raised_cosine"));
  c.kernel.symmetrize = get<bool>(ker, "symmetrize", "kernel", true);
  if (ker.contains("channels")) {
    if (!ker["channels"].is_array()) config_error("kernel.channels must be an array");
    int idx = 0;
    for (const auto& ch : ker["channels"]) {
      const std::string where = "kernel.channels[" + std::to_string(idx) + "]";
      check_keys(ch, where, {"kind", "label", "site", "center", "width", "table", "amplitude"});
      ChannelSpec s;
      const std::string kind = require<std::string>(ch, "kind", where);
      if (kind == "site_projector") {
        s.kind = ChannelSpec::Kind::SiteProjector;
        s.site = require<int>(ch, "site", where);
      } else if (kind == "position_gaussian") {
        s.kind = ChannelSpec::Kind::PositionGaussian;
        s.center = require<double>(ch, "center", where);
        s.width = require<double>(ch, "width", where);
      } else if (kind == "momentum_function") {
        s.kind = ChannelSpec::Kind::MomentumFunction;
        s.table = require<std::vector<double>>(ch, "table", where);
      } else {
        config_error(where + ": unknown channel kind '" + kind + "'");
      }
      s.label = get<std::string>(ch, "label", where, "ch" + std::to_string(idx));
      s.amplitude = require<double>(ch, "amplitude", where);
      s.profile = {c.kernel.ell_min, c.kernel.profile};
      c.kernel.channels.push_back(std::move(s));
      ++idx;
    }
  }
  if (ker.contains("covariance") && !ker["covariance"].is_null()) {
    const auto rows = get<std::vector<std::vector<double>>>(ker, "covariance", "kernel", {});
    const int n = static_cast<int>(rows.size());
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i) {
      if (static_cast<int>(rows[static_cast<std::size_t>(i)].size()) != n) config_error("kernel.covariance must be square");
      for (int k = 0; k < n; ++k) m(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
    c.kernel.covariance = m;
  }

  const json tim = root.value("time", json::object());
  check_keys(tim, "time", {"t0", "t1", "dt"});
  c.time.t0 = get<double>(tim, "t0", "time", c.time.t0);
  c.time.t1 = get<double>(tim, "t1", "time", c.time.t1);
  c.time.dt = get<double>(tim, "dt", "time", c.time.dt);

  const json noi = root.value("noise", json::object());
  check_keys(noi, "noise", {"seed", "window"});
  c.seed = get<std::uint64_t>(noi, "seed", "noise", 0);
  if (noi.contains("window")) {
    const json& w = noi["window"];
    check_keys(w, "noise.window", {"kind", "t_on", "t_off", "ramp"});
    const std::string kind = get<std::string>(w, "kind", "noise.window", "always");
    if (kind == "always") c.window.kind = NoiseWindow::Kind::Always;
    else if (kind == "zero") c.window.kind = NoiseWindow::Kind::Zero;
    else if (kind == "strip") {
      c.window.kind = NoiseWindow::Kind::Strip;
      c.window.t_on = require<double>(w, "t_on", "noise.window");
      c.window.t_off = require<double>(w, "t_off", "noise.window");
      c.window.ramp = require<double>(w, "ramp", "noise.window");
    } else {
      config_error("noise.window: unknown kind '" + kind + "'");
    }
  }

  const json ens = root.value("ensemble", json::object());
  check_keys(ens, "ensemble", {"realizations", "observables", "picture", "workers"});
  c.realizations = get<int>(ens, "realizations", "ensemble", c.realizations);
  c.observables = get<std::vector<std::string>>(ens, "observables", "ensemble", {});
  c.picture = parse_picture(get<std::string>(ens, "picture", "ensemble", "transformed"));
  if (ens.contains("workers") && !ens["workers"].is_null()) c.workers = get<int>(ens, "workers", "ensemble", 1);

  const json run = root.value("run", json::object());
  check_keys(run, "run", {"preset", "output_dir", "initial_state", "tolerances"});
  c.preset = get<std::string>(run, "preset", "run", "");
  c.output_dir = get<std::string>(run, "output_dir", "run", c.output_dir);
  c.initial_state = get<std::string>(run, "initial_state", "run", "");
  c.tolerances = get<std::map<std::string, double>>(run, "tolerances", "run", {});
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, "config '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  json j;
  j["lattice"] = {{"sites", lattice.sites}, {"spacing", lattice.spacing}, {"mass", lattice.mass}};
  json chans = json::array();
  for (const auto& s : kernel.channels) {
    json ch = {{"kind", channel_kind_name(s.kind)}, {"label", s.label}, {"amplitude", s.amplitude}};
    switch (s.kind) {
      case ChannelSpec::Kind::SiteProjector: ch["site"] = s.site; break;
      case ChannelSpec::Kind::PositionGaussian:
        ch["center"] = s.center;
        ch["width"] = s.width;
        break;
      case ChannelSpec::Kind::MomentumFunction: ch["table"] = s.table; break;
    }
    chans.push_back(ch);
  }
  j["kernel"] = {{"ell_min", kernel.ell_min},
                 {"profile", to_string(kernel.profile)},
                 {"symmetrize", kernel.symmetrize},
                 {"channels", chans}};
  if (kernel.covariance) {
    json rows = json::array();
    for (int i = 0; i < kernel.covariance->rows(); ++i) {
      std::vector<double> r;
      for (int k = 0; k < kernel.covariance->cols(); ++k) r.push_back((*kernel.covariance)(i, k));
      rows.push_back(r);
    }
    j["kernel"]["covariance"] = rows;
  }
  j["time"] = {{"t0", time.t0}, {"t1", time.t1}, {"dt", time.dt}};
  json w = {{"kind", window_kind_name(window.kind)}};
  if (window.kind == NoiseWindow::Kind::Strip) {
    w["t_on"] = window.t_on;
    w["t_off"] = window.t_off;
    w["ramp"] = window.ramp;
  }
  j["noise"] = {{"seed", seed}, {"window", w}};
  j["ensemble"] = {{"realizations", realizations}, {"observables", observables}, {"picture", to_string(picture)}};
  if (workers) j["ensemble"]["workers"] = *workers;
  j["run"] = {{"preset", preset}, {"output_dir", output_dir}, {"tolerances", tolerances}};
  if (!initial_state.empty()) j["run"]["initial_state"] = initial_state;
  return j;
}

void ExperimentConfig::validate() const {
  try {
    lattice.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::ConfigError, std::string("lattice: ") + e.what());
  }
  if (!(kernel.ell_min > 0.0)) config_error("kernel.ell_min must be positive");
  if (realizations < 2) config_error("ensemble.realizations must be >= 2");
  if (workers && *workers < 1) config_error("ensemble.workers must be >= 1");
  std::set<std::string> labels;
  for (const auto& s : kernel.channels) {
    if (!labels.insert(s.label).second) config_error("duplicate channel label '" + s.label + "'");
    if (!std::isfinite(s.amplitude)) config_error("channel amplitude must be finite");
  }
  if (kernel.covariance && kernel.covariance->rows() != static_cast<int>(kernel.channels.size()))
    config_error("kernel.covariance size must match the channel count");
  if (window.kind == NoiseWindow::Kind::Strip) {
    if (!(window.t_off > window.t_on)) config_error("noise.window needs t_off > t_on");
    if (window.ramp < 0.0 || 2.0 * window.ramp > window.t_off - window.t_on)
      config_error("noise.window ramp must fit inside [t_on, t_off]");
  }
  try {
    time.validate(kernel.ell_min);
    const auto channels = build_channels();
    const Operator h0 = build_dirac_h0(lattice);
    for (const auto& o : observables) make_observable(o, lattice, h0);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigError) throw;
    throw Error(ErrorKind::ConfigError, std::string(to_string(e.kind())) + ": " + e.what());
  }
}

std::vector<InteractionChannel> ExperimentConfig::build_channels() const {
  std::vector<InteractionChannel> out;
  for (const auto& s : kernel.channels) out.push_back(make_channel(s, lattice));
  if (kernel.covariance) return diagonalize_covariance(Covariance{*kernel.covariance}, out);
  return out;
}

ModelSetup ExperimentConfig::model() const {
  ModelSetup m;
  m.h0 = build_dirac_h0(lattice);
  m.spacing = lattice.spacing;
  m.channels = build_channels();
  m.grid = time;
  m.window = window.window();
  m.symmetrize = kernel.symmetrize;
  return m;
}

double ExperimentConfig::tolerance(const std::string& name, double fallback) const {
  const auto it = tolerances.find(name);
  return it == tolerances.end() ? fallback : it->second;
}

Observable make_observable(const std::string& name, const LatticeConfig& lattice, const Operator& h0) {
  const int dim = lattice.dim();
  if (name == "energy") return {name, h0.matrix()};
  if (name == "identity") return {name, Matrix::Identity(dim, dim)};
  if (name == "half_sign") {
    Matrix m = Matrix::Zero(dim, dim);
    for (int x = 0; x < lattice.sites; ++x)
      for (int s = 0; s < 2; ++s) m(2 * x + s, 2 * x + s) = (2 * x < lattice.sites) ? -1.0 : 1.0;
    return {name, m};
  }
  if (name == "energy_sign" || name == "positive_projector") {
    const auto eig = HermitianEigen::of(h0.matrix());
    RealVector f(dim);
    for (int i = 0; i < dim; ++i) {
      const double e = eig.values(i);
      f(i) = name == "energy_sign" ? (e > 0.0 ? 1.0 : -1.0) : (e > 0.0 ? 1.0 : 0.0);
    }
    return {name, hermitize(eig.apply(f))};
  }
  if (name.rfind("site:", 0) == 0) {
    int site = -1;
    try {
      site = std::stoi(name.substr(5));
    } catch (...) {
    }
    if (site < 0 || site >= lattice.sites) config_error("observable '" + name + "': bad site index");
    Matrix m = Matrix::Zero(dim, dim);
    m(2 * site, 2 * site) = 1.0;
    m(2 * site + 1, 2 * site + 1) = 1.0;
    return {name, m};
  }
  config_error("unknown observable '" + name + "'");
}

}  // namespace cfs
