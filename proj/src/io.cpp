#include "mvaug/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <openssl/evp.h>

namespace mvaug {
namespace {

namespace fs = std::filesystem;

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_vec(m.row(r).transpose()));
  return rows;
}

/// NaN and infinities become null.
json number(double x) {
  if (!std::isfinite(x)) return nullptr;
  return x;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string payload(const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += fmt(v[i]);
  }
  return out;
}

Eigen::VectorXd parse_payload(const std::string& s) {
  std::vector<double> vals;
  if (s.empty()) return {};
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t next = s.find(';', pos);
    if (next == std::string::npos) next = s.size();
    vals.push_back(std::stod(s.substr(pos, next - pos)));
    pos = next + 1;
  }
  return from_vec(vals);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = line.find(',', pos);
    if (next == std::string::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
}

const char* to_string(AlphaPolicyKind k) {
  switch (k) {
    case AlphaPolicyKind::kConstant: return "constant";
    case AlphaPolicyKind::kUniform: return "uniform";
    case AlphaPolicyKind::kTwoLevel: return "two_level";
  }
  return "constant";
}

AlphaPolicyKind alpha_kind_from_string(const std::string& s) {
  if (s == "constant") return AlphaPolicyKind::kConstant;
  if (s == "uniform") return AlphaPolicyKind::kUniform;
  if (s == "two_level") return AlphaPolicyKind::kTwoLevel;
  throw std::invalid_argument("unknown alpha policy: " + s);
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

json to_json(const DistParams& p) {
  json j;
  j["d"] = p.d;
  j["P"] = p.P;
  j["K"] = p.K;
  j["rho"] = p.rho;
  j["sigma_xi"] = p.sigma_xi;
  j["sigma_zeta"] = p.sigma_zeta;
  j["alpha"] = p.alpha;
  j["alpha_policy"] = {{"kind", to_string(p.alpha_policy.kind)},
                       {"high_prob", p.alpha_policy.high_prob},
                       {"low_value", p.alpha_policy.low_value}};
  j["feature_basis"] = p.feature_basis ? matrix_json(*p.feature_basis) : json(nullptr);
  if (p.spurious) {
    j["spurious"] = {{"u", to_vec(p.spurious->u)},
                     {"rho_u_pos", p.spurious->rho_u_pos},
                     {"rho_u_neg", p.spurious->rho_u_neg},
                     {"slot", p.spurious->slot}};
  } else {
    j["spurious"] = nullptr;
  }
  j["p_star"] = p.p_star;
  j["p_xi"] = p.p_xi;
  j["uniform_feature_patch"] = p.uniform_feature_patch;
  return j;
}

DistParams params_from_json(const json& j) {
  DistParams p;
  p.d = j.at("d").get<int>();
  p.P = j.value("P", 2);
  p.K = j.value("K", 1);
  p.rho = j.at("rho").get<std::vector<double>>();
  p.sigma_xi = j.value("sigma_xi", 1.0);
  p.sigma_zeta = j.value("sigma_zeta", 0.0);
  p.alpha = j.value("alpha", 0.0);
  if (j.contains("alpha_policy") && !j["alpha_policy"].is_null()) {
    const json& a = j["alpha_policy"];
    p.alpha_policy.kind = alpha_kind_from_string(a.value("kind", "constant"));
    p.alpha_policy.high_prob = a.value("high_prob", 0.5);
    p.alpha_policy.low_value = a.value("low_value", 0.0);
  }
  if (j.contains("feature_basis") && !j["feature_basis"].is_null()) {
    const json& rows = j["feature_basis"];
    Eigen::MatrixXd B(static_cast<Eigen::Index>(rows.size()), p.d);
    for (std::size_t r = 0; r < rows.size(); ++r)
      B.row(static_cast<Eigen::Index>(r)) = from_vec(rows[r].get<std::vector<double>>()).transpose();
    p.feature_basis = B;
  }
  if (j.contains("spurious") && !j["spurious"].is_null()) {
    const json& s = j["spurious"];
    SpuriousConfig sp;
    if (s.contains("u")) {
      sp.u = from_vec(s["u"].get<std::vector<double>>());
    } else {
      // Shorthand: the standard basis vector at coordinate u_index.
      sp.u = Eigen::VectorXd::Unit(p.d, s.value("u_index", p.d - 1));
    }
    sp.rho_u_pos = s.value("rho_u_pos", 0.0);
    sp.rho_u_neg = s.value("rho_u_neg", 0.0);
    sp.slot = s.value("slot", 2);
    p.spurious = sp;
  }
  p.p_star = j.value("p_star", 0);
  p.p_xi = j.value("p_xi", 1);
  p.uniform_feature_patch = j.value("uniform_feature_patch", false);
  return p;
}

const char* to_string(SamplingMode mode) { return mode == SamplingMode::kIid ? "iid" : "stratified"; }

SamplingMode sampling_mode_from_string(const std::string& s) {
  if (s == "iid") return SamplingMode::kIid;
  if (s == "stratified") return SamplingMode::kStratified;
  throw std::invalid_argument("unknown sampling mode: " + s);
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  json meta;
  meta["schema"] = kDatasetSchema;
  meta["params"] = to_json(ds.params);
  meta["seed"] = ds.seed;
  meta["mode"] = to_string(ds.mode);
  meta["n"] = ds.size();
  if (ds.augmented_from) {
    json pairs = json::array();
    for (const auto& [src, shift] : ds.augmented_from->pairing) pairs.push_back({src, shift});
    meta["augmentation"] = {{"source_seed", ds.augmented_from->source_seed},
                            {"shifts_applied", ds.augmented_from->shifts_applied},
                            {"pairing", pairs}};
  } else {
    meta["augmentation"] = nullptr;
  }
  write_json(meta, dir / "params.json");

  std::ofstream out = open_out(dir / "samples.csv");
  out << "sample,patch,kind,y,k,alpha,flag,payload\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Sample& s = ds.samples[i];
    out << i << ',' << s.p_star << ",feature," << s.y << ',' << s.k_star << ",0,0,\n";
    out << i << ',' << s.p_xi << ",noise," << s.y << ",-1,0,0," << payload(s.xi) << '\n';
    for (const BackgroundPatch& b : s.background)
      out << i << ',' << b.p << ",background," << s.y << ',' << b.k << ',' << fmt(b.alpha) << ",0,"
          << payload(b.zeta) << '\n';
    if (s.spurious.size() > 0)
      out << i << ',' << s.spurious_slot << ",spurious," << s.y << ",-1,0," << (s.has_spurious ? 1 : 0) << ','
          << payload(s.spurious) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing samples.csv");
}

Dataset load_dataset(const fs::path& dir) {
  const json meta = read_json(dir / "params.json");
  if (meta.value("schema", "") != kDatasetSchema)
    throw std::runtime_error("unsupported dataset schema in " + (dir / "params.json").string());
  Dataset ds;
  ds.params = params_from_json(meta.at("params"));
  ds.seed = meta.value("seed", std::uint64_t{0});
  ds.mode = sampling_mode_from_string(meta.value("mode", "iid"));
  const std::size_t n = meta.at("n").get<std::size_t>();
  ds.samples.resize(n);
  if (!meta["augmentation"].is_null()) {
    AugmentationInfo info;
    const json& a = meta["augmentation"];
    info.source_seed = a.value("source_seed", std::uint64_t{0});
    info.shifts_applied = a.at("shifts_applied").get<std::vector<int>>();
    for (const auto& pr : a.at("pairing")) info.pairing.emplace_back(pr[0].get<int>(), pr[1].get<int>());
    ds.augmented_from = info;
  }

  std::ifstream in(dir / "samples.csv");
  if (!in) throw std::runtime_error("cannot read " + (dir / "samples.csv").string());
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 8) throw std::runtime_error("malformed samples.csv row: " + line.substr(0, 80));
    const std::size_t i = std::stoul(f[0]);
    if (i >= n) throw std::runtime_error("sample index out of range in samples.csv");
    Sample& s = ds.samples[i];
    const int p = std::stoi(f[1]);
    s.y = std::stoi(f[3]);
    if (f[2] == "feature") {
      s.p_star = p;
      s.k_star = std::stoi(f[4]);
    } else if (f[2] == "noise") {
      s.p_xi = p;
      s.xi = parse_payload(f[7]);
    } else if (f[2] == "background") {
      s.background.push_back({p, std::stod(f[5]), std::stoi(f[4]), parse_payload(f[7])});
    } else if (f[2] == "spurious") {
      s.spurious_slot = p;
      s.has_spurious = f[6] == "1";
      s.spurious = parse_payload(f[7]);
    } else {
      throw std::runtime_error("unknown patch kind: " + f[2]);
    }
  }
  return ds;
}

void save_model(const Model& model, const fs::path& path) {
  static_assert(std::endian::native == std::endian::little, "model files are little-endian");
  std::ofstream out = open_out(path, std::ios::binary);
  char magic[16] = {};
  std::strncpy(magic, kModelSchema, sizeof magic - 1);
  out.write(magic, sizeof magic);
  const std::int32_t header[3] = {model.C(), model.d(), model.q};
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> W = model.W;
  out.write(reinterpret_cast<const char*>(W.data()), static_cast<std::streamsize>(W.size() * sizeof(double)));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Model load_model(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[16] = {};
  in.read(magic, sizeof magic);
  if (std::string(magic) != kModelSchema) throw std::runtime_error("not an " + std::string(kModelSchema) + " file");
  std::int32_t header[3] = {};
  in.read(reinterpret_cast<char*>(header), sizeof header);
  if (!in || header[0] < 0 || header[1] < 0) throw std::runtime_error("truncated model header");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> W(header[0], header[1]);
  in.read(reinterpret_cast<char*>(W.data()), static_cast<std::streamsize>(W.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated model weights");
  Model m;
  m.W = W;
  m.q = header[2];
  return m;
}

json to_json(const GinitReport& r) {
  json conds = json::array();
  for (const GinitCondition& c : r.conditions) {
    conds.push_back({{"name", c.name},
                     {"pass", c.pass},
                     {"measured_lo", c.measured_lo},
                     {"measured_hi", c.measured_hi},
                     {"band_lo", c.band_lo},
                     {"band_hi", c.band_hi},
                     {"measured_cross", c.measured_cross},
                     {"band_cross", c.band_cross}});
  }
  const GinitTolerances& t = r.tolerances;
  return {{"all_pass", r.all_pass()},
          {"sigma_0", r.sigma_0},
          {"conditions", conds},
          {"tolerances",
           {{"c_lo", t.c_lo},
            {"c_hi", t.c_hi},
            {"c_norm", t.c_norm},
            {"c_cross", t.c_cross},
            {"norm_lo", t.norm_lo},
            {"norm_hi", t.norm_hi},
            {"relax_noise_lower", t.relax_noise_lower}}}};
}

json to_json(const TestErrorReport& r) {
  json views = json::array();
  for (double e : r.view_error) views.push_back(number(e));
  return {{"n_test", r.n_test},   {"errors", r.errors},           {"error", r.error},
          {"ci_lo", r.ci_lo},     {"ci_hi", r.ci_hi},             {"view_counts", r.view_counts},
          {"view_errors", r.view_errors}, {"view_error", views}};
}

json to_json(const EnvelopeCheck& c) {
  json v = json::array();
  for (const EnvelopeViolation& e : c.violations)
    v.push_back({{"t", e.t}, {"index", e.index}, {"value", number(e.value)}, {"band_lo", e.band_lo}, {"band_hi", e.band_hi}});
  return {{"name", c.name},       {"checked", c.checked}, {"compliant", c.compliant},
          {"fraction", c.fraction}, {"pass", c.pass},       {"ratio_median", number(c.ratio_median)},
          {"violations", v}};
}

json to_json(const EnvelopeReport& r) {
  return {{"feature_growth", to_json(r.feature_growth)},
          {"noise_growth", to_json(r.noise_growth)},
          {"feature_drift", to_json(r.feature_drift)},
          {"noise_drift", to_json(r.noise_drift)},
          {"heldout_drift", to_json(r.heldout_drift)}};
}

json to_json(const ViewAccuracy& a) {
  json views = json::array();
  for (double x : a.view_accuracy) views.push_back(number(x));
  return {{"n_test", a.n_test},
          {"accuracy", a.accuracy},
          {"view_counts", a.view_counts},
          {"view_correct", a.view_correct},
          {"view_accuracy", views}};
}

json to_json(const ImpossibilityReport& r) {
  json cells = json::array();
  for (const auto& [p, k] : r.mixed_cells) cells.push_back({p, k});
  json wit = json::array();
  for (const auto& [a, b] : r.witness_samples) wit.push_back({a, b});
  return {{"verdict", to_string(r.verdict)},
          {"lp_separable", r.lp_separable},
          {"min_norm", r.min_norm},
          {"iterations", r.iterations},
          {"best_linear_error", r.best_linear_error},
          {"linear_error_lower_bound", r.linear_error_lower_bound},
          {"mu_lambda", r.mu_lambda},
          {"mixed_cells", cells},
          {"cells_total", r.cells_total},
          {"witness_samples", wit},
          {"witness_error", r.witness_error},
          {"witness_min_margin", r.witness_min_margin},
          {"witness_margin_bound", r.witness_margin_bound}};
}

void write_fit_labels(const std::vector<FitLabel>& labels, const Dataset& ds, const fs::path& path) {
  std::ofstream out = open_out(path);
  out << "sample,k_star,y,tag,feature_corr,noise_corr\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << i << ',' << ds.samples[i].k_star << ',' << ds.samples[i].y << ',' << to_string(labels[i].tag) << ','
        << fmt(labels[i].feature_corr) << ',' << fmt(labels[i].noise_corr) << '\n';
  }
}

void write_trajectory(const TrainResult& result, const fs::path& path) {
  std::ofstream out = open_out(path);
  const bool frames = !result.frames.empty();
  out << "t,loss,min_margin";
  if (frames) {
    const ProbeFrame& f0 = result.frames.front();
    for (Eigen::Index k = 0; k < f0.feat_corr.rows(); ++k)
      for (Eigen::Index c = 0; c < f0.feat_corr.cols(); ++c) out << ",feat_k" << k << "_c" << c;
    for (Eigen::Index i = 0; i < f0.noise_corr.size(); ++i) out << ",noise_" << i;
    out << '\n';
    for (const ProbeFrame& f : result.frames) {
      out << f.t << ',' << fmt(f.loss) << ',' << fmt(f.min_margin);
      for (Eigen::Index k = 0; k < f.feat_corr.rows(); ++k)
        for (Eigen::Index c = 0; c < f.feat_corr.cols(); ++c) out << ',' << fmt(f.feat_corr(k, c));
      for (Eigen::Index i = 0; i < f.noise_corr.size(); ++i) out << ',' << fmt(f.noise_corr[i]);
      out << '\n';
    }
  } else {
    out << '\n';
    for (const CurvePoint& c : result.curve) out << c.t << ',' << fmt(c.loss) << ',' << fmt(c.min_margin) << '\n';
  }
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return json::parse(in);
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

}  // namespace mvaug
