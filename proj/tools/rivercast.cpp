// rivercast: synthetic river-discharge forecasting pipeline.
//
// Subcommands: gen-data, fit-thresholds, train, forecast, evaluate, curve.
// Every run is reproducible from (config, seed, input files); --threads 1
// keeps outputs bit-deterministic.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <tuple>

#include "rivercast/config_io.hpp"
#include "rivercast/evaluate.hpp"

namespace fs = std::filesystem;
using namespace rivercast;

namespace {

// removes partially written outputs when a command fails
class OutputGuard {
 public:
  void track(const std::string& path) { paths_.push_back(path); }
  void commit() { committed_ = true; }
  ~OutputGuard() {
    if (committed_) return;
    for (const std::string& p : paths_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }

 private:
  std::vector<std::string> paths_;
  bool committed_ = false;
};

struct RunConfig {
  ModelConfig model;
  FitConfig optimizer;
  int train_end_day = 0;
  int val_end_day = 0;
  std::uint64_t seed = 1;
  int threads = 1;
};

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot open config: " + path);
  json j = json::parse(f);
  reject_unknown_keys(j, {"model", "optimizer", "loss", "split", "seed", "threads"}, "config");
  RunConfig rc;
  if (j.contains("model")) rc.model = model_config_from_json(j.at("model"));
  if (j.contains("optimizer")) rc.optimizer = fit_config_from_json(j.at("optimizer"));
  if (j.contains("loss")) {
    reject_unknown_keys(j.at("loss"), {"alpha"}, "loss");
    rc.optimizer.alpha = j.at("loss").value("alpha", rc.optimizer.alpha);
  }
  if (j.contains("split")) {
    reject_unknown_keys(j.at("split"), {"train_end_day", "val_end_day"}, "split");
    rc.train_end_day = j.at("split").value("train_end_day", 0);
    rc.val_end_day = j.at("split").value("val_end_day", 0);
  }
  rc.seed = j.value("seed", rc.seed);
  rc.threads = j.value("threads", rc.threads);
  return rc;
}

json resolved_config_json(const RunConfig& rc) {
  return json{{"model", model_config_to_json(rc.model)},
              {"optimizer", fit_config_to_json(rc.optimizer)},
              {"loss", {{"alpha", rc.optimizer.alpha}}},
              {"split", {{"train_end_day", rc.train_end_day}, {"val_end_day", rc.val_end_day}}},
              {"seed", rc.seed},
              {"threads", rc.threads}};
}

std::vector<std::vector<double>> per_point_series(const Simulation& sim, int end_day) {
  std::vector<std::vector<double>> out;
  for (int p = 0; p < sim.n_points; ++p) {
    std::vector<double> s = sim.discharge_series(p);
    s.resize(std::size_t(std::min(end_day, sim.days)));
    out.push_back(std::move(s));
  }
  return out;
}

// training-split discharge per point, reconstructed from dataset targets
std::vector<std::vector<double>> dataset_training_series(const Dataset& ds, int train_end_day, Date* start_out) {
  require(!ds.samples.empty(), "dataset has no samples");
  int p_count = ds.points.size();
  int first_day = ds.samples.front().t + 1;  // earliest day with a target
  std::vector<std::vector<double>> series{std::size_t(p_count)};
  for (auto& s : series) s.assign(std::size_t(std::max(0, train_end_day - first_day)), kNaN);
  for (const ForecastSample& s : ds.samples)
    for (int l = 1; l <= s.L; ++l) {
      int day = s.t + l;
      if (day >= train_end_day) continue;
      for (int p = 0; p < p_count; ++p)
        series[std::size_t(p)][std::size_t(day - first_day)] = s.target[std::size_t(l - 1) * s.P + p];
    }
  std::int64_t day0 = days_from_civil(ds.start) + first_day;
  *start_out = civil_from_days(day0);
  return series;
}

void write_continuous_csv(std::ofstream& f, const std::vector<PointReport>& reports) {
  f << "point_id,lead,rp,metric,value\n";
  f.precision(12);
  auto row = [&](std::int64_t id, int lead, const char* name, double v, bool defined) {
    if (!defined) return;
    f << id << ',' << lead << ",,"  << name << ',' << v << "\n";
  };
  for (const PointReport& r : reports)
    for (std::size_t l = 0; l < r.by_lead.size(); ++l) {
      const ContinuousMetrics& m = r.by_lead[l];
      row(r.point_id, int(l + 1), "mae", m.mae, true);
      row(r.point_id, int(l + 1), "rmse", m.rmse, true);
      row(r.point_id, int(l + 1), "r", m.r, m.r_defined);
      row(r.point_id, int(l + 1), "r2", m.r2, m.r2_defined);
      row(r.point_id, int(l + 1), "kge", m.kge, m.kge_defined);
    }
}

void write_event_csv(std::ofstream& f, const std::vector<PointReport>& reports,
                     const std::vector<double>& return_periods) {
  f << "point_id,lead,rp,metric,value\n";
  f.precision(12);
  for (const PointReport& r : reports)
    for (std::size_t l = 0; l < r.events.size(); ++l)
      for (std::size_t k = 0; k < return_periods.size(); ++k) {
        const EventMetrics& m = r.events[l][k];
        if (m.precision_defined)
          f << r.point_id << ',' << (l + 1) << ',' << return_periods[k] << ",precision," << m.precision << "\n";
        if (m.recall_defined)
          f << r.point_id << ',' << (l + 1) << ',' << return_periods[k] << ",recall," << m.recall << "\n";
        if (m.f1_defined)
          f << r.point_id << ',' << (l + 1) << ',' << return_periods[k] << ",f1," << m.f1 << "\n";
      }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rivercast: river discharge and flood forecasting on synthetic river networks"};
  app.require_subcommand(1);

  // --- gen-data ---
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset container");
  std::uint64_t gd_seed = 1;
  int gd_points = 256, gd_days = 2000, gd_grid_w = 20, gd_grid_h = 20, gd_leads = 7, gd_T = 4;
  std::string gd_out = "dataset.rsds";
  gen->add_option("--seed", gd_seed, "generation seed");
  gen->add_option("--points", gd_points, "number of river points");
  gen->add_option("--days", gd_days, "number of simulated days");
  gen->add_option("--grid-w", gd_grid_w, "grid width in cells");
  gen->add_option("--grid-h", gd_grid_h, "grid height in cells");
  gen->add_option("--leads", gd_leads, "forecast lead times");
  gen->add_option("--hindcast-days", gd_T, "hindcast window T");
  gen->add_option("--out", gd_out, "output dataset path")->required();

  // --- fit-thresholds ---
  auto* fitth = app.add_subcommand("fit-thresholds", "fit per-point flood thresholds on the training split");
  std::string ft_data, ft_out = "thresholds.csv";
  int ft_train_end = 0, ft_min_years = 5;
  fitth->add_option("--data", ft_data, "dataset path")->required();
  fitth->add_option("--train-end-day", ft_train_end, "first day excluded from the training split")->required();
  fitth->add_option("--min-years", ft_min_years, "minimum usable years per point");
  fitth->add_option("--out", ft_out, "output thresholds CSV")->required();

  // --- train ---
  auto* train = app.add_subcommand("train", "train a model");
  std::string tr_config, tr_data, tr_thresholds, tr_out_dir = ".";
  std::uint64_t tr_seed = 0;
  int tr_threads = 0;
  train->add_option("--config", tr_config, "run config JSON")->required();
  train->add_option("--data", tr_data, "dataset path")->required();
  train->add_option("--thresholds", tr_thresholds, "thresholds CSV")->required();
  train->add_option("--out", tr_out_dir, "output directory");
  train->add_option("--seed", tr_seed, "override config seed");
  train->add_option("--threads", tr_threads, "override config threads");

  // --- forecast ---
  auto* fc = app.add_subcommand("forecast", "emit per-point forecasts with severity categories");
  std::string fc_checkpoint, fc_data, fc_thresholds, fc_out = "forecast.csv";
  int fc_from_day = 0;
  fc->add_option("--checkpoint", fc_checkpoint, "checkpoint prefix (without .rsnn)")->required();
  fc->add_option("--data", fc_data, "dataset path")->required();
  fc->add_option("--thresholds", fc_thresholds, "thresholds CSV")->required();
  fc->add_option("--from-day", fc_from_day, "first issuance day to forecast");
  fc->add_option("--out", fc_out, "output CSV")->required();

  // --- evaluate ---
  auto* ev = app.add_subcommand("evaluate", "score the model and the classical baselines");
  std::string ev_checkpoint, ev_data, ev_thresholds, ev_out_dir = ".", ev_dump_clim;
  int ev_train_end = 0, ev_val_end = 0, ev_threads = 1;
  bool ev_oracle = false;
  ev->add_option("--data", ev_data, "dataset path")->required();
  ev->add_option("--thresholds", ev_thresholds, "thresholds CSV")->required();
  ev->add_option("--checkpoint", ev_checkpoint, "checkpoint prefix");
  ev->add_flag("--oracle", ev_oracle, "score a target-passthrough oracle instead of a checkpoint");
  ev->add_option("--train-end-day", ev_train_end, "training split end (climatology history)")->required();
  ev->add_option("--val-end-day", ev_val_end, "validation split end (test starts here)")->required();
  ev->add_option("--threads", ev_threads, "worker threads for per-point sections");
  ev->add_option("--out", ev_out_dir, "output directory");
  ev->add_option("--dump-climatology", ev_dump_clim, "also write the climatology quantile table CSV here");

  // --- curve ---
  auto* cv = app.add_subcommand("curve", "emit a space-filling curve tour as CSV");
  std::string cv_kind = "gilbert", cv_out;
  int cv_w = 8, cv_h = 8;
  cv->add_option("--kind", cv_kind, "sweep_h|sweep_v|zigzag_h|zigzag_v|gilbert|gilbert_t");
  cv->add_option("--width", cv_w, "grid width")->required();
  cv->add_option("--height", cv_h, "grid height")->required();
  cv->add_option("--out", cv_out, "output CSV (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      OutputGuard guard;
      guard.track(gd_out);
      SyntheticNetwork net = generate_network(gd_seed, gd_grid_w, gd_grid_h, gd_points);
      SimulateOptions opt;
      opt.leads = gd_leads;
      Simulation sim = simulate(net, gd_days, gd_seed, opt);
      Dataset ds = dataset_from_simulation(sim, net, gd_T);
      save_dataset(ds, gd_out);
      guard.commit();
      std::cout << "gen-data: seed=" << gd_seed << " points=" << gd_points << " days=" << gd_days
                << " samples=" << ds.samples.size() << " -> " << gd_out << "\n";
    } else if (*fitth) {
      OutputGuard guard;
      guard.track(ft_out);
      Dataset ds = load_dataset(ft_data);
      std::vector<std::int64_t> ids;
      for (int p = 0; p < ds.points.size(); ++p) ids.push_back(ds.points[p].id);
      Date series_start;
      auto series = dataset_training_series(ds, ft_train_end, &series_start);
      FloodThresholds th = fit_flood_thresholds(ids, series, series_start, default_return_periods(), ft_min_years);
      save_thresholds_csv(th, ft_out);
      guard.commit();
      std::cout << "fit-thresholds: points=" << th.points() << " train_end_day=" << ft_train_end << " -> " << ft_out
                << "\n";
    } else if (*train) {
      RunConfig rc = load_run_config(tr_config);
      if (tr_seed != 0) rc.seed = tr_seed;
      if (tr_threads != 0) rc.threads = tr_threads;
      rc.optimizer.seed = rc.seed;
      rc.optimizer.compute_threads = rc.threads;
      std::cout << resolved_config_json(rc).dump(2) << "\n";

      fs::create_directories(tr_out_dir);
      std::string prefix = (fs::path(tr_out_dir) / "checkpoint").string();
      OutputGuard guard;
      guard.track(prefix + ".rsnn");
      guard.track(prefix + ".json");
      guard.track((fs::path(tr_out_dir) / "loss_trace.csv").string());

      Dataset ds = load_dataset(tr_data);
      DatasetSource source(ds);
      FloodThresholds th = load_thresholds_csv(tr_thresholds);
      require(rc.train_end_day > 0, "config: split.train_end_day must be set");
      SplitIndices split = chronological_split(source, rc.train_end_day, rc.val_end_day);
      Model model = make_model(rc.model, rc.seed);
      FitResult fr = fit(model, source, split.train, split.val, th, rc.optimizer);
      save_checkpoint(model, fr.stats, prefix);
      save_loss_trace_csv(fr.trace, (fs::path(tr_out_dir) / "loss_trace.csv").string());
      guard.commit();
      std::cout << "train: steps=" << fr.trace.size() << " initial_loss=" << fr.initial_train_loss
                << " final_loss=" << fr.final_train_loss << " best_val=" << fr.best_val_loss << " -> " << prefix
                << ".rsnn\n";
    } else if (*fc) {
      OutputGuard guard;
      guard.track(fc_out);
      auto [model, stats] = load_checkpoint(fc_checkpoint);
      Dataset ds = load_dataset(fc_data);
      DatasetSource source(ds);
      FloodThresholds th = load_thresholds_csv(fc_thresholds);
      std::vector<int> th_rows = threshold_rows_for(ds.points, th);
      ForecastFn forecaster = model_forecaster(model, stats, ds.points, th);
      std::ofstream f(fc_out);
      require(f.good(), "cannot open for writing: " + fc_out);
      f.precision(12);
      f << "point_id,issuance,lead,discharge,severity_rp\n";
      for (int i = 0; i < source.size(); ++i) {
        if (source.issuance_day(i) < fc_from_day) continue;
        ForecastSample s = source.sample(i);
        std::vector<double> q = forecaster(s);
        for (int l = 0; l < s.L; ++l)
          for (int p = 0; p < s.P; ++p) {
            double v = q[std::size_t(l) * s.P + p];
            f << ds.points[p].id << ',' << format_date(s.issuance) << ',' << (l + 1) << ',' << v << ','
              << severity_rank(v, th, th_rows[std::size_t(p)]) << "\n";
          }
      }
      f.close();
      guard.commit();
      std::cout << "forecast: -> " << fc_out << "\n";
    } else if (*ev) {
      require(ev_oracle || !ev_checkpoint.empty(), "evaluate: need --checkpoint or --oracle");
      fs::create_directories(ev_out_dir);
      Dataset ds = load_dataset(ev_data);
      DatasetSource source(ds);
      FloodThresholds th = load_thresholds_csv(ev_thresholds);
      SplitIndices split = chronological_split(source, ev_train_end, ev_val_end);
      require(!split.test.empty(), "evaluate: empty test split");

      Date clim_start;
      auto train_series = dataset_training_series(ds, ev_train_end, &clim_start);
      int hist_days = int(train_series.front().size());
      std::vector<double> history(std::size_t(hist_days) * ds.points.size());
      for (int d = 0; d < hist_days; ++d)
        for (int p = 0; p < ds.points.size(); ++p)
          history[std::size_t(d) * ds.points.size() + p] = train_series[std::size_t(p)][std::size_t(d)];
      ClimatologyTable clim = build_climatology(history, hist_days, ds.points.size(), clim_start, 31, ev_threads);
      if (!ev_dump_clim.empty()) {
        std::vector<std::int64_t> clim_ids;
        for (int p = 0; p < ds.points.size(); ++p) clim_ids.push_back(ds.points[p].id);
        save_climatology_csv(clim, clim_ids, ev_dump_clim);
      }

      struct Entry {
        std::string name;
        ForecastFn fn;
      };
      std::vector<Entry> entries;
      Model model;
      NormStats stats;
      if (ev_oracle) {
        entries.push_back({"model", oracle_forecaster()});
      } else {
        std::tie(model, stats) = load_checkpoint(ev_checkpoint);
        entries.push_back({"model", model_forecaster(model, stats, ds.points, th)});
      }
      entries.push_back({"persistence", persistence_forecaster()});
      entries.push_back({"climatology", climatology_forecaster(clim)});

      OutputGuard guard;
      std::string summary_path = (fs::path(ev_out_dir) / "summary.csv").string();
      guard.track(summary_path);
      std::ofstream summary(summary_path);
      require(summary.good(), "cannot open for writing: " + summary_path);
      summary << "model,r2,kge,f1,r2_median,kge_median,f1_median,undef_r2,undef_kge,undef_f1\n";
      summary.precision(6);
      for (Entry& e : entries) {
        std::vector<PointReport> reports = evaluate_forecaster(source, split.test, e.fn, th, ev_threads);
        MetricSummary ms = aggregate_reports(reports, th.return_periods);
        std::string cont_path = (fs::path(ev_out_dir) / (e.name + "_continuous.csv")).string();
        std::string evt_path = (fs::path(ev_out_dir) / (e.name + "_events.csv")).string();
        guard.track(cont_path);
        guard.track(evt_path);
        std::ofstream fc_file(cont_path), fe_file(evt_path);
        require(fc_file.good() && fe_file.good(), "cannot open metric CSVs in " + ev_out_dir);
        write_continuous_csv(fc_file, reports);
        write_event_csv(fe_file, reports, th.return_periods);
        // KGE and F1 are reported x100 in tables
        summary << e.name << ',' << ms.r2_all.mean << ',' << 100.0 * ms.kge_all.mean << ','
                << 100.0 * ms.f1_small_rps.mean << ',' << ms.r2_all.median << ',' << 100.0 * ms.kge_all.median << ','
                << 100.0 * ms.f1_small_rps.median << ',' << ms.r2_all.n_undefined << ',' << ms.kge_all.n_undefined
                << ',' << ms.f1_small_rps.n_undefined << "\n";
      }
      summary.close();
      guard.commit();
      std::cout << "evaluate: test_samples=" << split.test.size() << " -> " << summary_path << "\n";
    } else if (*cv) {
      std::vector<Cell> tour = curve_tour(curve_from_name(cv_kind), cv_w, cv_h);
      std::ostream* os = &std::cout;
      std::ofstream f;
      OutputGuard guard;
      if (!cv_out.empty()) {
        guard.track(cv_out);
        f.open(cv_out);
        require(f.good(), "cannot open for writing: " + cv_out);
        os = &f;
      }
      *os << "step,x,y\n";
      for (std::size_t i = 0; i < tour.size(); ++i) *os << i << ',' << tour[i].x << ',' << tour[i].y << "\n";
      guard.commit();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
