#include "mtfqi/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "mtfqi/format.hpp"
#include "mtfqi/rng.hpp"
#include "mtfqi/serialize.hpp"

namespace mtfqi {

namespace {

using nlohmann::json;

constexpr int kSweepSchemaVersion = 1;
const char* kCsvHeader =
    "axis,axis_value,seed,d1_opt,d1_beh,stage_h_mse,fixed_stage_bound,"
    "horizon_bound,lambda_max,status";

int worker_count() {
  if (const char* env = std::getenv("MTFQI_THREADS")) {
    const int requested = std::atoi(env);
    if (requested > 0) return requested;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

double response_field(const SweepRow& row, const std::string& response) {
  if (response == "d1_opt") return row.d1_opt;
  if (response == "d1_beh") return row.d1_beh;
  if (response == "stage_h_mse") return row.stage_h_mse;
  if (response == "fixed_stage_bound") return row.fixed_stage_bound;
  if (response == "horizon_bound") return row.horizon_bound;
  if (response == "lambda_max") return row.lambda;
  throw std::invalid_argument("unknown response column '" + response + "'");
}

std::string sanitize(const std::string& text) {
  std::string out = text;
  for (char& c : out)
    if (c == ',' || c == '\n') c = ';';
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (axis != "T" && axis != "n" && axis != "H")
    throw std::invalid_argument("sweep axis must be one of T, n, H");
  if (values.size() < 2) throw std::invalid_argument("sweep needs at least 2 axis values");
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] <= values[i - 1])
      throw std::invalid_argument("sweep axis values must be strictly increasing");
  if (seeds.size() < 5) throw std::invalid_argument("sweep needs at least 5 seeds");
  if (fixed.num_encoders < 1)
    throw std::invalid_argument("sweep needs at least one encoder");
  if (!(fixed.delta > 0.0 && fixed.delta < 1.0))
    throw std::invalid_argument("delta must lie in (0,1)");
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  const json doc = json::parse(in);
  if (doc.value("kind", "") != "mtfqi.sweep")
    throw std::runtime_error("file is not a mtfqi.sweep document");
  const int version = doc.value("schema_version", -1);
  if (version != kSweepSchemaVersion)
    throw std::runtime_error("sweep schema version " + std::to_string(version) +
                             " unsupported; this build reads version " +
                             std::to_string(kSweepSchemaVersion));

  ExperimentConfig config;
  config.axis = doc["axis"].get<std::string>();
  config.values = doc["values"].get<std::vector<int>>();
  config.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
  const json& fixed = doc["fixed"];
  config.fixed.num_states = fixed.value("S", 5);
  config.fixed.num_actions = fixed.value("K", 3);
  config.fixed.latent_dim = fixed.value("d", 4);
  config.fixed.num_tasks = fixed.value("T", 5);
  config.fixed.samples = fixed.value("n", 200);
  config.fixed.horizon = fixed.value("H", 5);
  config.fixed.gamma = fixed.value("gamma", 1.0);
  config.fixed.num_encoders = fixed.value("num_encoders", 8);
  config.fixed.corruption = fixed.value("corruption", FixedParams{}.corruption);
  config.fixed.behavior = BehaviorSpec::parse(fixed.value("behavior", "uniform"));
  config.fixed.delta = fixed.value("delta", 0.05);
  config.fixed.w_max = fixed.value("w_max", 1.0);
  config.fixed.ridge = fixed.value("ridge", 1e-8);
  config.fixed.mode = fixed.value("mode", "per-stage") == std::string("global")
                          ? SolverConfig::Mode::Global
                          : SolverConfig::Mode::PerStage;
  config.validate();
  return config;
}

void save_experiment_config(const ExperimentConfig& config, const std::string& path) {
  json fixed{{"S", config.fixed.num_states},
             {"K", config.fixed.num_actions},
             {"d", config.fixed.latent_dim},
             {"T", config.fixed.num_tasks},
             {"n", config.fixed.samples},
             {"H", config.fixed.horizon},
             {"gamma", config.fixed.gamma},
             {"num_encoders", config.fixed.num_encoders},
             {"corruption", config.fixed.corruption},
             {"behavior", config.fixed.behavior.to_string()},
             {"delta", config.fixed.delta},
             {"w_max", config.fixed.w_max},
             {"ridge", config.fixed.ridge},
             {"mode", config.fixed.mode == SolverConfig::Mode::Global ? "global"
                                                                      : "per-stage"}};
  json doc{{"schema_version", kSweepSchemaVersion},
           {"kind", "mtfqi.sweep"},
           {"axis", config.axis},
           {"values", config.values},
           {"seeds", config.seeds},
           {"fixed", std::move(fixed)}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << doc.dump(2) << "\n";
}

CellResult run_cell(const FixedParams& fixed, const std::string& axis, int axis_value,
                    std::uint64_t seed) {
  CellResult cell;
  cell.row.axis = axis;
  cell.row.axis_value = axis_value;
  cell.row.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  try {
    FixedParams params = fixed;
    if (axis == "T")
      params.num_tasks = axis_value;
    else if (axis == "n")
      params.samples = axis_value;
    else if (axis == "H")
      params.horizon = axis_value;
    else
      throw std::invalid_argument("unknown axis '" + axis + "'");

    EnsembleSpec spec;
    spec.num_states = params.num_states;
    spec.num_actions = params.num_actions;
    spec.horizon = params.horizon;
    spec.num_tasks = params.num_tasks;
    spec.latent_dim = params.latent_dim;
    spec.gamma = params.gamma;
    spec.w_max = params.w_max;

    const TaskEnsemble ensemble = generate_ensemble(spec, derive_seed(seed, 1));
    const EncoderClass encoders =
        build_encoder_class(ensemble.true_features, params.num_encoders - 1,
                            params.corruption, derive_seed(seed, 2));
    const DatasetBundle bundle =
        collect_bundle(ensemble, params.behavior, params.samples, derive_seed(seed, 3));

    SolverConfig solver;
    solver.ridge = params.ridge;
    solver.gamma = params.gamma;
    solver.mode = params.mode;
    solver.psi_eff = default_psi_eff(params.w_max, params.samples, params.latent_dim);
    const TrainResult trained = run_mtfqi(bundle, encoders, solver);

    cell.eval = evaluate_model(ensemble, trained.model, params.behavior);

    BoundInputs& inputs = cell.inputs;
    const double cap = q_max(params.gamma, params.horizon);
    inputs.b = cap * cap;
    inputs.num_encoders = encoders.size();
    inputs.psi_eff = solver.psi_eff;
    inputs.num_tasks = params.num_tasks;
    inputs.n = params.samples;
    inputs.horizon = params.horizon;
    inputs.delta = params.delta;
    inputs.lambda = cell.eval.lambda;
    inputs.sigma_sq = *std::max_element(trained.report.residual_sq_variance.begin(),
                                        trained.report.residual_sq_variance.end());
    inputs.eps_irred = 0.0;  // the class contains the generating features
    inputs.rademacher = params.w_max / std::sqrt(double(params.samples));

    cell.row.d1_opt = cell.eval.vs_optimal.delta[0];
    cell.row.d1_beh = cell.eval.vs_behavior.delta[0];
    cell.row.stage_h_mse = cell.eval.vs_optimal.mean_sq[params.horizon - 1];
    cell.row.fixed_stage_bound = fixed_stage_bound(inputs);
    cell.row.horizon_bound = unrolled_horizon_bound(inputs);
    cell.row.lambda = cell.eval.lambda;
    cell.row.ok = true;
  } catch (const std::exception& e) {
    cell.row.ok = false;
    cell.row.error = e.what();
    cell.row.d1_opt = cell.row.d1_beh = cell.row.stage_h_mse =
        cell.row.fixed_stage_bound = cell.row.horizon_bound = cell.row.lambda =
            std::numeric_limits<double>::quiet_NaN();
  }
  cell.row.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - start)
                         .count();
  return cell;
}

std::vector<CellResult> run_sweep(const ExperimentConfig& config) {
  config.validate();
  struct Job {
    int value;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (int value : config.values)
    for (std::uint64_t seed : config.seeds) jobs.push_back({value, seed});

  std::vector<CellResult> cells(jobs.size());
  std::atomic<std::size_t> next{0};
  const int workers = std::min<int>(worker_count(), static_cast<int>(jobs.size()));
  auto work = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      cells[i] = run_cell(config.fixed, config.axis, jobs[i].value, jobs[i].seed);
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  return cells;
}

std::vector<SweepRow> sweep_rows(const std::vector<CellResult>& cells) {
  std::vector<SweepRow> rows;
  rows.reserve(cells.size());
  for (const CellResult& cell : cells) rows.push_back(cell.row);
  return rows;
}

void write_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path);
  out << kCsvHeader << "\n";
  for (const SweepRow& row : rows) {
    out << row.axis << ',' << row.axis_value << ',' << row.seed << ','
        << format_double(row.d1_opt) << ',' << format_double(row.d1_beh) << ','
        << format_double(row.stage_h_mse) << ','
        << format_double(row.fixed_stage_bound) << ','
        << format_double(row.horizon_bound) << ',' << format_double(row.lambda) << ','
        << (row.ok ? "ok" : "error: " + sanitize(row.error)) << "\n";
  }
  if (!out) throw std::runtime_error("write_csv: write failed for " + path);
}

std::vector<SweepRow> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader)
    throw std::runtime_error("read_csv: unexpected header in " + path);

  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 10)
      throw std::runtime_error("read_csv: malformed row '" + line + "'");
    SweepRow row;
    row.axis = fields[0];
    row.axis_value = std::stoi(fields[1]);
    row.seed = std::stoull(fields[2]);
    row.d1_opt = std::stod(fields[3]);
    row.d1_beh = std::stod(fields[4]);
    row.stage_h_mse = std::stod(fields[5]);
    row.fixed_stage_bound = std::stod(fields[6]);
    row.horizon_bound = std::stod(fields[7]);
    row.lambda = std::stod(fields[8]);
    row.ok = fields[9] == "ok";
    if (!row.ok) row.error = fields[9];
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::pair<double, double>> mean_response(const std::vector<SweepRow>& rows,
                                                     const std::string& response,
                                                     bool square_response) {
  std::map<int, std::pair<double, int>> acc;
  for (const SweepRow& row : rows) {
    if (!row.ok) continue;
    double value = response_field(row, response);
    if (square_response) value *= value;
    if (!std::isfinite(value)) continue;
    auto& slot = acc[row.axis_value];
    slot.first += value;
    slot.second += 1;
  }
  std::vector<std::pair<double, double>> means;
  for (const auto& [axis_value, slot] : acc)
    means.emplace_back(axis_value, slot.first / slot.second);
  return means;
}

SlopeFit fit_loglog_slope(const std::vector<double>& axis_values,
                          const std::vector<double>& mean_responses) {
  if (axis_values.size() != mean_responses.size())
    throw std::invalid_argument("fit_loglog_slope: length mismatch");
  std::vector<double> lx, ly;
  int excluded = 0;
  for (std::size_t i = 0; i < axis_values.size(); ++i) {
    if (!(mean_responses[i] > 0.0) || !(axis_values[i] > 0.0)) {
      ++excluded;
      continue;
    }
    lx.push_back(std::log(axis_values[i]));
    ly.push_back(std::log(mean_responses[i]));
  }
  if (lx.size() < 2)
    throw std::runtime_error("fit_loglog_slope: need at least 2 positive responses");

  const double n = static_cast<double>(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0)
    throw std::runtime_error("fit_loglog_slope: axis values are all equal");

  SlopeFit fit;
  fit.excluded = excluded;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double mean_y = sy / n;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double pred = fit.intercept + fit.slope * lx[i];
    ss_res += (ly[i] - pred) * (ly[i] - pred);
    ss_tot += (ly[i] - mean_y) * (ly[i] - mean_y);
  }
  fit.r_squared = ss_tot == 0.0 ? 1.0 : 1.0 - ss_res / ss_tot;
  return fit;
}

SlopeFit fit_loglog_slope(const std::vector<SweepRow>& rows, const std::string& response,
                          bool square_response) {
  const auto means = mean_response(rows, response, square_response);
  std::vector<double> x, y;
  for (const auto& [value, mean] : means) {
    x.push_back(value);
    y.push_back(mean);
  }
  return fit_loglog_slope(x, y);
}

namespace {

std::string coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace

void emit_plot(const std::string& csv_path, const std::string& axis,
               const std::string& response, const std::string& out_path) {
  const std::vector<SweepRow> all_rows = read_csv(csv_path);
  std::vector<SweepRow> rows;
  for (const SweepRow& row : all_rows)
    if (row.ok && row.axis == axis) rows.push_back(row);

  std::vector<std::pair<double, double>> points;  // (log10 x, log10 y)
  for (const SweepRow& row : rows) {
    const double value = response_field(row, response);
    if (value > 0.0 && std::isfinite(value))
      points.emplace_back(std::log10(double(row.axis_value)), std::log10(value));
  }
  if (points.empty())
    throw std::runtime_error("emit_plot: no plottable data for response '" + response +
                             "' on axis '" + axis + "'");

  const auto means = mean_response(rows, response, false);
  const SlopeFit fit = fit_loglog_slope(rows, response, false);

  std::vector<std::pair<double, double>> mean_pts, bound_pts;
  for (const auto& [value, mean] : means)
    if (mean > 0.0) mean_pts.emplace_back(std::log10(value), std::log10(mean));
  if (response != "horizon_bound") {
    for (const auto& [value, mean] : mean_response(rows, "horizon_bound", false))
      if (mean > 0.0 && std::isfinite(mean))
        bound_pts.emplace_back(std::log10(value), std::log10(mean));
  }

  double min_x = points[0].first, max_x = points[0].first;
  double min_y = points[0].second, max_y = points[0].second;
  auto widen = [&](const std::pair<double, double>& p) {
    min_x = std::min(min_x, p.first);
    max_x = std::max(max_x, p.first);
    min_y = std::min(min_y, p.second);
    max_y = std::max(max_y, p.second);
  };
  for (const auto& p : points) widen(p);
  for (const auto& p : mean_pts) widen(p);
  for (const auto& p : bound_pts) widen(p);
  if (max_x == min_x) {
    min_x -= 0.5;
    max_x += 0.5;
  }
  if (max_y == min_y) {
    min_y -= 0.5;
    max_y += 0.5;
  }
  const double pad_x = 0.05 * (max_x - min_x);
  const double pad_y = 0.08 * (max_y - min_y);
  min_x -= pad_x;
  max_x += pad_x;
  min_y -= pad_y;
  max_y += pad_y;

  const double width = 720, height = 520;
  const double left = 80, right = 30, top = 40, bottom = 60;
  auto sx = [&](double x) {
    return left + (x - min_x) / (max_x - min_x) * (width - left - right);
  };
  auto sy = [&](double y) {
    return height - bottom - (y - min_y) / (max_y - min_y) * (height - top - bottom);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << coord(left) << "\" y1=\"" << coord(height - bottom)
      << "\" x2=\"" << coord(width - right) << "\" y2=\"" << coord(height - bottom)
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << coord(left) << "\" y1=\"" << coord(top) << "\" x2=\""
      << coord(left) << "\" y2=\"" << coord(height - bottom) << "\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 4; ++i) {
    const double fx = min_x + (max_x - min_x) * i / 4.0;
    const double fy = min_y + (max_y - min_y) * i / 4.0;
    svg << "<line x1=\"" << coord(sx(fx)) << "\" y1=\"" << coord(height - bottom)
        << "\" x2=\"" << coord(sx(fx)) << "\" y2=\"" << coord(height - bottom + 5)
        << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << coord(sx(fx)) << "\" y=\"" << coord(height - bottom + 20)
        << "\" font-size=\"12\" text-anchor=\"middle\">" << tick_label(std::pow(10.0, fx))
        << "</text>\n";
    svg << "<line x1=\"" << coord(left - 5) << "\" y1=\"" << coord(sy(fy)) << "\" x2=\""
        << coord(left) << "\" y2=\"" << coord(sy(fy)) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << coord(left - 8) << "\" y=\"" << coord(sy(fy) + 4)
        << "\" font-size=\"12\" text-anchor=\"end\">" << tick_label(std::pow(10.0, fy))
        << "</text>\n";
  }

  svg << "<text x=\"" << coord((left + width - right) / 2) << "\" y=\""
      << coord(height - 15) << "\" font-size=\"14\" text-anchor=\"middle\">" << axis
      << " (log scale)</text>\n";
  svg << "<text x=\"18\" y=\"" << coord((top + height - bottom) / 2)
      << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << coord((top + height - bottom) / 2) << ")\">" << response
      << " (log scale)</text>\n";

  if (!bound_pts.empty()) {
    svg << "<polyline class=\"bound\" fill=\"none\" stroke=\"#c44e52\" "
           "stroke-dasharray=\"6 3\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : bound_pts) svg << coord(sx(p.first)) << "," << coord(sy(p.second)) << " ";
    svg << "\"/>\n";
  }
  svg << "<polyline class=\"mean\" fill=\"none\" stroke=\"#4c72b0\" stroke-width=\"2\" "
         "points=\"";
  for (const auto& p : mean_pts) svg << coord(sx(p.first)) << "," << coord(sy(p.second)) << " ";
  svg << "\"/>\n";
  for (const auto& p : points)
    svg << "<circle class=\"pt\" cx=\"" << coord(sx(p.first)) << "\" cy=\""
        << coord(sy(p.second)) << "\" r=\"3\" fill=\"#4c72b0\" fill-opacity=\"0.45\"/>\n";

  char annotation[128];
  std::snprintf(annotation, sizeof(annotation), "slope = %.4f (r^2 = %.4f)", fit.slope,
                fit.r_squared);
  svg << "<text x=\"" << coord(width - right - 10) << "\" y=\"" << coord(top + 10)
      << "\" font-size=\"13\" text-anchor=\"end\">" << annotation << "</text>\n";
  svg << "</svg>\n";

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_plot: cannot open " + out_path);
  out << svg.str();
  if (!out) throw std::runtime_error("emit_plot: write failed for " + out_path);
}

}  // namespace mtfqi
