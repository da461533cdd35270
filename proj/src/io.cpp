#include "pdmr/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pdmr {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string hex_hash(uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double parse_double(const std::string& s, int line) {
  if (s == "inf" || s == "+inf")
    return std::numeric_limits<double>::infinity();
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size()) throw ConfigError("trailing characters after number '" + s + "'", line);
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + s + "'", line);
  }
}

int parse_int(const std::string& s, int line) {
  const double v = parse_double(s, line);
  if (v != std::floor(v)) throw ConfigError("expected an integer, got '" + s + "'", line);
  return static_cast<int>(v);
}

bool parse_bool(const std::string& s, int line) {
  if (s == "true" || s == "1" || s == "on") return true;
  if (s == "false" || s == "0" || s == "off") return false;
  throw ConfigError("expected a boolean, got '" + s + "'", line);
}

Vec3 parse_vec3(const std::string& s, int line) {
  std::istringstream in(s);
  Vec3 v;
  std::string a, b, c, rest;
  if (!(in >> a >> b >> c) || (in >> rest))
    throw ConfigError("expected three numbers, got '" + s + "'", line);
  v.x = parse_double(a, line);
  v.y = parse_double(b, line);
  v.z = parse_double(c, line);
  return v;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Scene parse_scene(std::istream& in, const std::string& origin) {
  Scene scene;
  std::string section;
  int line_no = 0;
  bool any_section = false;

  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(origin + ": unterminated section header", line_no);
      section = trim(line.substr(1, line.size() - 2));
      any_section = true;
      if (section == "optics" || section == "scene") {
        // singletons
      } else if (section == "params") {
        scene.params.emplace_back();
      } else if (section == "nv") {
        scene.nvs.emplace_back();
      } else if (section == "source") {
        scene.sources.emplace_back();
      } else if (section == "bridge") {
        scene.bridges.emplace_back();
      } else if (section == "electrode") {
        scene.electrodes.emplace_back();
      } else {
        throw ConfigError(origin + ": unknown section [" + section + "]", line_no);
      }
      continue;
    }

    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ": expected 'key = value'", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ConfigError(origin + ": expected 'key = value'", line_no);
    if (section.empty())
      throw ConfigError(origin + ": key '" + key + "' outside any section", line_no);

    auto unknown = [&]() -> ConfigError {
      return ConfigError(origin + ": unknown key '" + key + "' in [" + section + "]", line_no);
    };

    if (section == "optics") {
      OpticsConfig& o = scene.optics;
      if (key == "spot_radius") o.spot_radius = parse_double(val, line_no);
      else if (key == "half_angle") o.half_angle = parse_double(val, line_no);
      else if (key == "refraction_factor") o.refraction_factor = parse_double(val, line_no);
      else if (key == "laser_power") o.laser_power = parse_double(val, line_no);
      else if (key == "aux_power") o.aux_power = parse_double(val, line_no);
      else if (key == "aux_offset") o.aux_offset = parse_vec3(val, line_no);
      else if (key == "smear_coeff") o.smear_coeff = parse_double(val, line_no);
      else throw unknown();
    } else if (section == "scene") {
      if (key == "tag") scene.tag = val;
      else throw unknown();
    } else if (section == "params") {
      ModelParams& p = scene.params.back();
      if (key == "capture_exp") p.capture_exp = parse_double(val, line_no);
      else if (key == "depletion_exp") p.depletion_exp = parse_double(val, line_no);
      else if (key == "gain_exp") p.gain_exp = parse_double(val, line_no);
      else if (key == "injection_exp") p.injection_exp = parse_double(val, line_no);
      else if (key == "trap_capacity") p.trap_capacity = parse_double(val, line_no);
      else if (key == "recomb_coeff") p.recomb_coeff = parse_double(val, line_no);
      else if (key == "gen_coeff") p.gen_coeff = parse_double(val, line_no);
      else if (key == "saturation_power") p.saturation_power = parse_double(val, line_no);
      else throw unknown();
    } else if (section == "nv") {
      NVCentre& nv = scene.nvs.back();
      if (key == "position") nv.position = parse_vec3(val, line_no);
      else if (key == "gen_coeff") nv.gen_coeff = parse_double(val, line_no);
      else if (key == "saturation_power") nv.saturation_power = parse_double(val, line_no);
      else if (key == "odmr_contrast") nv.odmr_contrast = parse_double(val, line_no);
      else if (key == "radiative_rel") nv.radiative_rel = parse_double(val, line_no);
      else throw unknown();
    } else if (section == "source") {
      SourcePoint& s = scene.sources.back();
      if (key == "position") s.position = parse_vec3(val, line_no);
      else if (key == "electrode") s.electrode = parse_int(val, line_no);
      else if (key == "j0") s.iv.j0 = parse_double(val, line_no);
      else if (key == "u0") s.iv.u0 = parse_double(val, line_no);
      else if (key == "reverse_leak") s.iv.reverse_leak = parse_double(val, line_no);
      else if (key == "dark_gate") s.iv.dark_gate = parse_bool(val, line_no);
      else throw unknown();
    } else if (section == "bridge") {
      BridgePatch& b = scene.bridges.back();
      if (key == "center") b.center = parse_vec3(val, line_no);
      else if (key == "radius") b.radius = parse_double(val, line_no);
      else if (key == "params") b.params_link = parse_int(val, line_no);
      else if (key == "electrode") b.electrode = parse_int(val, line_no);
      else throw unknown();
    } else if (section == "electrode") {
      Electrode& e = scene.electrodes.back();
      if (key == "rect") {
        std::istringstream rs(val);
        std::string a, b, c, d, rest;
        if (!(rs >> a >> b >> c >> d) || (rs >> rest))
          throw ConfigError(origin + ": rect needs four numbers", line_no);
        e.x0 = parse_double(a, line_no);
        e.y0 = parse_double(b, line_no);
        e.x1 = parse_double(c, line_no);
        e.y1 = parse_double(d, line_no);
      } else if (key == "transparency") {
        e.transparency = parse_double(val, line_no);
      } else {
        throw unknown();
      }
    }
  }

  if (!any_section) throw ConfigError(origin + ": no sections found (empty scene file?)");
  if (scene.params.empty()) scene.params.emplace_back();  // defaults
  try {
    scene.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return scene;
}

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scene file " + path.string());
  return parse_scene(in, path.filename().string());
}

namespace {

void write_map_header(std::ostream& out, const Map2D& map, const ScanResult& meta,
                      const std::string& which, const std::string& units) {
  out << "# pdmr-sim map " << kToolVersion << "\n";
  out << "# map: " << which << "\n";
  out << "# scene: " << (meta.scene_tag.empty() ? "-" : meta.scene_tag) << " hash "
      << hex_hash(meta.scene_hash) << "\n";
  out << "# axis_a: " << meta.axis_a << " a0 " << fmt(map.a0) << " pitch "
      << fmt(map.pitch) << " na " << map.na << "\n";
  out << "# axis_b: " << meta.axis_b << " b0 " << fmt(map.b0) << " pitch "
      << fmt(map.pitch) << " nb " << map.nb << "\n";
  if (meta.focus_scale != 1.0)
    out << "# focus_depth: " << fmt(meta.focus_scale)
        << " x objective descent past the surface\n";
  out << "# reference_pA: " << fmt(meta.reference) << "\n";
  out << "# seed: " << meta.plan.seed << " noise_sigma_pA " << fmt(meta.plan.noise_sigma)
      << "\n";
  out << "# units: " << units << "\n";
  out << "# columns: a\tb\t" << which << "\n";
}

}  // namespace

void write_map(const Map2D& map, const ScanResult& meta, const std::string& which,
               const std::filesystem::path& path, MapFormat format) {
  if (format == MapFormat::delimited || format == MapFormat::both) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_map_header(out, map, meta, which, which == "tau" ? "s" : "pA");
    for (size_t ib = 0; ib < map.nb; ++ib)
      for (size_t ia = 0; ia < map.na; ++ia)
        out << fmt(map.a_of(ia)) << '\t' << fmt(map.b_of(ib)) << '\t'
            << fmt(map.at(ia, ib)) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
  }
  if (format == MapFormat::grayscale_image || format == MapFormat::both) {
    std::filesystem::path img = path;
    img += ".pgm";
    std::ofstream out(img, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + img.string());
    double lo = map.v.empty() ? 0 : map.v[0], hi = lo;
    for (double v : map.v) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const bool flat = !(hi > lo);
    out << "P5\n";
    out << "# pdmr-sim map " << which << " scene hash " << hex_hash(meta.scene_hash) << "\n";
    out << "# min " << fmt(lo) << " max " << fmt(hi)
        << (flat ? " zero_dynamic_range" : "") << "\n";
    out << map.na << " " << map.nb << "\n65535\n";
    for (size_t ib = 0; ib < map.nb; ++ib) {
      for (size_t ia = 0; ia < map.na; ++ia) {
        const double v = map.at(ia, ib);
        const uint16_t g = flat ? 32768
                                : static_cast<uint16_t>(
                                      std::lround((v - lo) / (hi - lo) * 65535.0));
        const unsigned char bytes[2] = {static_cast<unsigned char>(g >> 8),
                                        static_cast<unsigned char>(g & 0xff)};
        out.write(reinterpret_cast<const char*>(bytes), 2);
      }
    }
    if (!out) throw std::runtime_error("write failed: " + img.string());
  }
}

void write_scan_result(const ScanResult& result, const std::filesystem::path& dir,
                       const std::string& stem, MapFormat format) {
  std::filesystem::create_directories(dir);
  write_map(result.reset_map, result, "reset_pc", dir / (stem + "_reset.tsv"), format);
  if (!result.reaction_map.v.empty()) {
    write_map(result.reaction_map, result, "pc_reaction", dir / (stem + "_reaction.tsv"),
              format);
    write_map(result.tau_map, result, "tau", dir / (stem + "_tau.tsv"),
              MapFormat::delimited);
  }
}

LoadedMap read_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open map " + path.string());
  LoadedMap lm;
  std::string line;
  size_t na = 0, nb = 0;
  double a0 = 0, b0 = 0, pitch = 0;
  std::vector<double> values;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      lm.header.push_back(line.substr(line.find_first_not_of("# ")));
      std::istringstream hs(line.substr(1));
      std::string tag;
      hs >> tag;
      if (tag == "axis_a:" || tag == "axis_b:") {
        std::string name, kw;
        double v0 = 0, pv = 0;
        size_t nv = 0;
        hs >> name;
        while (hs >> kw) {
          if (kw == "a0" || kw == "b0") hs >> v0;
          else if (kw == "pitch") hs >> pv;
          else if (kw == "na" || kw == "nb") hs >> nv;
        }
        if (tag == "axis_a:") { a0 = v0; na = nv; pitch = pv; }
        else { b0 = v0; nb = nv; }
      }
      continue;
    }
    std::istringstream ds(line);
    double a, b, v;
    if (!(ds >> a >> b >> v))
      throw ConfigError(path.string() + ": bad map data line", line_no);
    values.push_back(v);
  }
  if (na == 0 || nb == 0 || values.size() != na * nb)
    throw ConfigError(path.string() + ": header/data size mismatch");
  lm.map.na = na;
  lm.map.nb = nb;
  lm.map.a0 = a0;
  lm.map.b0 = b0;
  lm.map.pitch = pitch;
  lm.map.v = std::move(values);
  return lm;
}

void write_sweep_table(std::span<const SweepRow> rows, uint64_t scene_hash,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# pdmr-sim power sweep " << kToolVersion << "\n";
  out << "# scene hash " << hex_hash(scene_hash) << "\n";
  out << "# columns: p_main_mW\tp_aux_mW\tcurrent_pA\n";
  for (const auto& r : rows)
    out << fmt(r.p_main) << '\t' << fmt(r.p_aux) << '\t' << fmt(r.current) << '\n';
}

void write_contrast_table(std::span<const ContrastRow> rows, uint64_t scene_hash,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# pdmr-sim contrast sweep " << kToolVersion << "\n";
  out << "# scene hash " << hex_hash(scene_hash) << "\n";
  out << "# columns: setting_mW\tc_pl\tc_pc\tintercept_pA\tj_off_pA\n";
  for (const auto& r : rows)
    out << fmt(r.setting) << '\t' << fmt(r.pair.c_pl) << '\t' << fmt(r.pair.c_pc) << '\t'
        << fmt(r.pair.intercept) << '\t' << fmt(r.pair.j_off) << '\n';
}

void write_trace(std::span<const std::pair<double, double>> series,
                 const std::string& col_a, const std::string& col_b,
                 const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# pdmr-sim trace " << kToolVersion << "\n";
  out << "# columns: " << col_a << '\t' << col_b << '\n';
  for (const auto& [a, b] : series) out << fmt(a) << '\t' << fmt(b) << '\n';
}

void write_charge_record(const ChargeRecord& record, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# pdmr-sim discharge record " << kToolVersion << "\n";
  out << "# illumination_time_s: " << fmt(record.illumination_time) << "\n";
  out << "# integrated_charge_pC: " << fmt(record.integrated_charge) << "\n";
  out << "# columns: t_s\tspike_pA\n";
  for (const auto& [t, pa] : record.spike_trace) out << fmt(t) << '\t' << fmt(pa) << '\n';
}

SweepDataset read_sweep_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset " + path.string());
  SweepDataset data;
  data.tag = path.filename().string();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ds(line);
    SweepPoint row;
    if (!(ds >> row.p_main >> row.p_aux >> row.current >> row.sigma))
      throw ConfigError(path.string() + ": expected 'p_main p_aux current sigma'", line_no);
    data.rows.push_back(row);
  }
  try {
    data.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return data;
}

void write_sweep_dataset(const SweepDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# pdmr-sim sweep dataset " << kToolVersion << "\n";
  out << "# columns: p_main_mW\tp_aux_mW\tcurrent_pA\tsigma_pA\n";
  for (const auto& r : data.rows)
    out << fmt(r.p_main) << '\t' << fmt(r.p_aux) << '\t' << fmt(r.current) << '\t'
        << fmt(r.sigma) << '\n';
}

void write_fit_report(const FitReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const ModelParams& p = report.best;
  out << "# pdmr-sim fit report " << kToolVersion << "\n";
  out << "best_exponents = " << static_cast<int>(p.capture_exp) << " "
      << static_cast<int>(p.depletion_exp) << " " << static_cast<int>(p.gain_exp) << " "
      << static_cast<int>(p.injection_exp) << "\n";
  out << "trap_capacity = " << fmt(p.trap_capacity) << "\n";
  out << "gen_coeff = " << fmt(p.gen_coeff) << "\n";
  out << "recomb_coeff = " << fmt(p.recomb_coeff) << "\n";
  out << "js0 = " << fmt(report.js0) << "\n";
  out << "residual = " << fmt(report.residual) << "\n";
  out << "converged = " << (report.converged ? 1 : 0) << "\n";
  out << "covariance =";
  for (const auto& row : report.covariance)
    for (double v : row) out << " " << fmt(v);
  out << "\n";
  out << "# exponent table: a b c d residual converged\n";
  for (const auto& cf : report.exponent_table)
    out << "candidate = " << cf.exps.capture << " " << cf.exps.depletion << " "
        << cf.exps.gain << " " << cf.exps.injection << " " << fmt(cf.residual) << " "
        << (cf.converged ? 1 : 0) << "\n";
}

}  // namespace pdmr
