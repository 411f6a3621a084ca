// Command-line entry point binding the library into reproducible workflows:
//   gen-synth    generate a synthetic shape-counting dataset
//   train        two-stage training on a dataset directory
//   predict      per-category counts (and map dumps) from a checkpoint
//   evaluate     counting/segmentation metrics and figures
//   score-masks  density-penalized proposal selection into instance masks
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.
// Every command accepts --seed and --config; command-line flags override
// config-file values, which override built-in defaults.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ilc/config.hpp"
#include "ilc/core.hpp"
#include "ilc/infer.hpp"
#include "ilc/io.hpp"
#include "ilc/metrics.hpp"
#include "ilc/network.hpp"
#include "ilc/peaks.hpp"
#include "ilc/plot.hpp"
#include "ilc/segscore.hpp"
#include "ilc/synthdata.hpp"
#include "ilc/train.hpp"

namespace fs = std::filesystem;
namespace cfg = ilc::config;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos <= s.size()) {
    size_t comma = s.find(',', pos);
    if (comma == std::string::npos) comma = s.size();
    std::string tok = s.substr(pos, comma - pos);
    if (!tok.empty()) out.push_back(tok);
    pos = comma + 1;
  }
  return out;
}

// Known config-file keys per section; shared format validated as a whole.
cfg::Schema config_schema() {
  using K = cfg::ValueKind;
  return {
      {"gen-synth",
       {{"out", K::kString},
        {"images", K::kInt},
        {"size", K::kInt},
        {"categories", K::kString},
        {"p_zero", K::kDouble},
        {"p_beyond", K::kDouble},
        {"max_count", K::kInt},
        {"occlusion", K::kDouble},
        {"min_radius", K::kInt},
        {"max_radius", K::kInt},
        {"train_fraction", K::kDouble},
        {"seed", K::kInt}}},
      {"train",
       {{"data", K::kString},
        {"out", K::kString},
        {"stage", K::kString},
        {"resume", K::kString},
        {"backbone_lr", K::kDouble},
        {"head_lr", K::kDouble},
        {"momentum", K::kDouble},
        {"weight_decay", K::kDouble},
        {"batch_size", K::kInt},
        {"lambda_rank", K::kDouble},
        {"negative_fraction", K::kDouble},
        {"stage1_epochs", K::kInt},
        {"stage2_epochs", K::kInt},
        {"flip", K::kBool},
        {"lr_decay_every", K::kInt},
        {"lr_decay_factor", K::kDouble},
        {"seed", K::kInt}}},
      {"predict",
       {{"checkpoint", K::kString},
        {"data", K::kString},
        {"out", K::kString},
        {"split", K::kString},
        {"ids", K::kString},
        {"export_density", K::kBool},
        {"seed", K::kInt}}},
      {"evaluate",
       {{"predictions", K::kString},
        {"data", K::kString},
        {"split", K::kString},
        {"metrics", K::kString},
        {"out", K::kString},
        {"density", K::kString},
        {"masks", K::kString},
        {"plot_dir", K::kString},
        {"seed", K::kInt}}},
      {"score-masks",
       {{"maps", K::kString},
        {"proposals", K::kString},
        {"responses", K::kString},
        {"out", K::kString},
        {"breakdown", K::kString},
        {"ids", K::kString},
        {"alpha", K::kDouble},
        {"beta", K::kDouble},
        {"gamma", K::kDouble},
        {"quantile", K::kDouble},
        {"sigma", K::kDouble},
        {"radius", K::kInt},
        {"seed", K::kInt}}},
  };
}

// File values fill in only where the command line left a flag untouched.
struct ConfigOverlay {
  const cfg::ParsedConfig* file = nullptr;
  CLI::App* cmd = nullptr;
  std::string section;

  template <typename T>
  void fill(const std::string& flag, const std::string& key, T* var) const {
    if (!file || cmd->count(flag) > 0) return;
    cfg::get(*file, section, key, var);
  }
};

// Loads + validates the shared config file; prints every violation at once.
// Returns false (-> usage error) if anything is wrong.
bool load_config_file(const std::string& path, cfg::ParsedConfig* out) {
  std::vector<std::string> violations;
  *out = cfg::load_config(path, &violations);
  cfg::validate_schema(*out, config_schema(), &violations);
  if (violations.empty()) return true;
  std::cerr << "config error: " << path << " has " << violations.size()
            << " violation(s):\n";
  for (const std::string& v : violations) std::cerr << "  " << v << "\n";
  return false;
}

// ---- gen-synth -------------------------------------------------------------

struct GenSynthArgs {
  std::string out, config;
  std::string categories = "disc,square,triangle";
  ilc::synth::GenConfig gen;
  long long seed = 1;
};

int run_gen_synth(GenSynthArgs& a) {
  a.gen.categories = split_csv(a.categories);
  a.gen.seed = static_cast<uint64_t>(a.seed);
  fs::create_directories(a.out);
  ilc::synth::GenSummary s = ilc::synth::generate(a.gen, a.out);
  std::cout << "dataset " << a.out << ": " << s.num_images << " images ("
            << s.train_images << " train, " << s.test_images << " test)\n";
  for (size_t c = 0; c < a.gen.categories.size(); ++c)
    std::cout << "  " << a.gen.categories[c] << ": "
              << s.instances_per_category[c] << " instances\n";
  return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string data, out, config, resume;
  std::string stage = "all";
  ilc::train::TrainConfig train;
  long long seed = 1;
};

int run_train(TrainArgs& a) {
  ilc::check(a.stage == "1" || a.stage == "2" || a.stage == "all",
             "train: --stage must be 1, 2, or all");
  a.train.seed = static_cast<uint64_t>(a.seed);
  a.train.validate();

  ilc::synth::Dataset ds = ilc::synth::load_dataset(a.data, "train");
  ilc::check(!ds.ids.empty(), "train: no training images under " + a.data);
  const int num_categories = ds.num_categories();
  ilc::train::TrainSet set;
  set.images.reserve(ds.size());
  for (size_t i = 0; i < ds.size(); ++i) set.images.push_back(ds.image(i));
  set.annotations = ds.annotations;
  set.validate(num_categories);

  fs::create_directories(a.out);
  const std::string stage1_path = (fs::path(a.out) / "stage1.ckpt").string();
  const std::string stage2_path = (fs::path(a.out) / "stage2.ckpt").string();

  std::string start_from = a.resume;
  if (a.stage == "2" && start_from.empty()) {
    ilc::check(fs::exists(stage1_path),
               "train: --stage 2 needs --resume or an existing " + stage1_path);
    start_from = stage1_path;
  }

  ilc::net::HeadConfig head;
  head.num_categories = num_categories;
  ilc::net::IlcNetwork network = ilc::net::IlcNetwork::make_default(head);
  if (start_from.empty()) {
    network.init(a.train.seed);
  } else {
    network = ilc::net::load_checkpoint(start_from, num_categories);
  }

  ilc::train::TrainStats stats;
  if (a.stage == "1" || a.stage == "all") {
    ilc::train::train_stage1(network, set, a.train, stats);
    ilc::net::save_checkpoint(network, stage1_path);
    std::cout << "stage 1: " << a.train.stage1_epochs << " epochs, "
              << network.step << " total steps -> " << stage1_path << "\n";
  }
  if (a.stage == "2" || a.stage == "all") {
    ilc::train::train_stage2(network, set, a.train, stats);
    ilc::net::save_checkpoint(network, stage2_path);
    std::cout << "stage 2: " << a.train.stage2_epochs << " epochs, "
              << network.step << " total steps -> " << stage2_path << "\n";
  }

  const std::string log_path = (fs::path(a.out) / "train_log.csv").string();
  ilc::io::write_text(log_path, ilc::train::format_loss_log(stats));
  std::string summary;
  summary += "images " + std::to_string(set.images.size()) + "\n";
  summary += "steps " + std::to_string(network.step) + "\n";
  summary += "mask_fallbacks " + std::to_string(stats.mask_fallbacks) + "\n";
  summary +=
      "skipped_positive " + std::to_string(stats.skipped_positive) + "\n";
  ilc::io::write_text((fs::path(a.out) / "train_summary.txt").string(),
                      summary);
  std::cout << "loss log: " << log_path << " (" << stats.log.size()
            << " rows), pseudo-mask fallbacks: " << stats.mask_fallbacks
            << ", skipped positives: " << stats.skipped_positive << "\n";
  return 0;
}

// ---- predict ---------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint, data, out, ids, config;
  std::string split = "test";
  bool export_density = false;
  long long seed = 1;
};

int run_predict(PredictArgs& a) {
  ilc::synth::Dataset ds = ilc::synth::load_dataset(a.data, a.split);
  ilc::net::IlcNetwork network =
      ilc::net::load_checkpoint(a.checkpoint, ds.num_categories());

  std::vector<size_t> chosen;
  if (a.ids.empty()) {
    for (size_t i = 0; i < ds.size(); ++i) chosen.push_back(i);
  } else {
    std::map<std::string, size_t> index;
    for (size_t i = 0; i < ds.size(); ++i) index[ds.ids[i]] = i;
    for (const std::string& id : split_csv(a.ids)) {
      auto it = index.find(id);
      ilc::check(it != index.end(),
                 "predict: image '" + id + "' not in split '" + a.split + "'");
      chosen.push_back(it->second);
    }
  }

  fs::create_directories(a.out);
  const fs::path maps_dir = fs::path(a.out) / "maps";
  if (a.export_density) fs::create_directories(maps_dir);

  std::vector<ilc::io::PredictionRecord> records;
  for (size_t i : chosen) {
    ilc::Tensor3 image = ds.image(i);
    ilc::infer::Prediction p = ilc::infer::predict(network, image);
    for (auto& r : ilc::infer::to_records(ds.ids[i], p))
      records.push_back(std::move(r));
    if (a.export_density) {
      ilc::io::write_density(
          (maps_dir / (ds.ids[i] + ".density.bin")).string(), p.density);
      ilc::io::write_density(
          (maps_dir / (ds.ids[i] + ".category.bin")).string(),
          p.category_maps);
    }
  }
  const std::string pred_path = (fs::path(a.out) / "predictions.txt").string();
  ilc::io::write_predictions(pred_path, records);
  std::cout << "wrote " << records.size() << " records for " << chosen.size()
            << " images -> " << pred_path << "\n";
  if (a.export_density)
    std::cout << "map dumps -> " << maps_dir.string() << "\n";
  return 0;
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateArgs {
  std::string predictions, data, config, density_dir, masks;
  std::string split = "test";
  std::string metrics = "mrmse,mrmse-nz,relrmse,relrmse-nz";
  std::string out = "metrics_report.txt";
  std::string plot_dir = "plots";
  std::vector<std::string> plots;
  std::string plot_image;
  long long seed = 1;
};

// Matched per-category count samples, predictions joined against ground truth.
std::vector<std::vector<ilc::CountSample>> matched_counts(
    const ilc::synth::Dataset& ds,
    const std::vector<ilc::io::PredictionRecord>& records) {
  const int C = ds.num_categories();
  std::map<std::string, std::vector<int>> by_image;
  for (size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    ilc::check(rec.category >= 0 && rec.category < C,
               "evaluate: prediction for unknown category " +
                   std::to_string(rec.category));
    auto& slots = by_image[rec.image_id];
    slots.resize(C, -1);
    ilc::check(slots[rec.category] < 0,
               "evaluate: duplicate prediction for " + rec.image_id +
                   " category " + std::to_string(rec.category));
    slots[rec.category] = static_cast<int>(r);
  }
  std::vector<std::vector<ilc::CountSample>> samples(C);
  for (size_t i = 0; i < ds.size(); ++i) {
    auto it = by_image.find(ds.ids[i]);
    ilc::check(it != by_image.end(),
               "evaluate: no predictions for image " + ds.ids[i]);
    for (int c = 0; c < C; ++c) {
      ilc::check(it->second[c] >= 0, "evaluate: missing prediction for " +
                                         ds.ids[i] + " category " +
                                         std::to_string(c));
      const auto& rec = records[size_t(it->second[c])];
      samples[c].push_back(
          {static_cast<int>(ds.raw_counts[i][size_t(c)]), rec.count});
    }
  }
  return samples;
}

ilc::MetricRow count_metric_row(
    const std::string& metric, const std::string& variant,
    const std::vector<std::vector<ilc::CountSample>>& samples, bool relative,
    bool nonzero, const ilc::synth::Dataset& ds) {
  ilc::PerCategoryMetric m = ilc::rmse_family(samples, relative, nonzero);
  for (int c : m.excluded)
    std::cerr << "note: category '" << ds.categories[size_t(c)]
              << "' has no nonzero ground truth; excluded from " << metric
              << " " << variant << "\n";
  return {metric, variant, m};
}

int run_evaluate(EvaluateArgs& a) {
  const std::set<std::string> known{"mrmse",  "mrmse-nz", "relrmse",
                                    "relrmse-nz", "game", "abo", "map"};
  std::vector<std::string> wanted = split_csv(a.metrics);
  for (const std::string& m : wanted)
    ilc::check(known.count(m) > 0,
               "evaluate: unknown metric '" + m +
                   "' (known: mrmse, mrmse-nz, relrmse, relrmse-nz, game, "
                   "abo, map)");

  ilc::synth::Dataset ds = ilc::synth::load_dataset(a.data, a.split);
  ilc::check(ds.size() > 0, "evaluate: split '" + a.split + "' is empty");
  auto records = ilc::io::read_predictions(a.predictions);

  auto samples = matched_counts(ds, records);
  std::vector<ilc::MetricRow> rows;
  for (const std::string& m : wanted) {
    if (m == "mrmse")
      rows.push_back(count_metric_row("rmse", "plain", samples, false, false, ds));
    else if (m == "mrmse-nz")
      rows.push_back(count_metric_row("rmse", "nz", samples, false, true, ds));
    else if (m == "relrmse")
      rows.push_back(
          count_metric_row("relrmse", "plain", samples, true, false, ds));
    else if (m == "relrmse-nz")
      rows.push_back(count_metric_row("relrmse", "nz", samples, true, true, ds));
  }

  // Grid-cell deviation needs exported density dumps plus point annotations.
  if (std::count(wanted.begin(), wanted.end(), "game") > 0) {
    ilc::check(!a.density_dir.empty(),
               "evaluate: game needs --density (maps dir from predict "
               "--export-density)");
    auto points = ilc::io::read_points(
        (fs::path(ds.root) / "points.txt").string());
    const int C = ds.num_categories();
    // Per category: a grid and a point list per image.
    std::vector<std::vector<ilc::Grid>> grids(static_cast<size_t>(C));
    std::vector<std::vector<std::vector<ilc::GridPoint>>> pts(
        static_cast<size_t>(C));
    for (size_t i = 0; i < ds.size(); ++i) {
      ilc::Tensor3 density = ilc::io::read_density(
          (fs::path(a.density_dir) / (ds.ids[i] + ".density.bin")).string());
      ilc::check(density.c == C, "evaluate: density dump category mismatch");
      ilc::Tensor3 image = ds.image(i);
      for (int c = 0; c < C; ++c) {
        grids[size_t(c)].push_back(density.channel(c));
        pts[size_t(c)].emplace_back();
      }
      for (const auto& p : points) {
        if (p.image_id != ds.ids[i]) continue;
        ilc::check(p.category >= 0 && p.category < C,
                   "evaluate: point record with unknown category " +
                       std::to_string(p.category));
        ilc::GridPoint gp;
        gp.row = std::min(density.h - 1,
                          static_cast<int>(p.row * density.h / image.h));
        gp.col = std::min(density.w - 1,
                          static_cast<int>(p.col * density.w / image.w));
        pts[size_t(p.category)].back().push_back(gp);
      }
    }
    for (int n = 0; n <= 3; ++n) {
      ilc::PerCategoryMetric m;
      m.per_category.resize(size_t(C));
      for (int c = 0; c < C; ++c)
        m.per_category[size_t(c)] = ilc::game(grids[size_t(c)], pts[size_t(c)], n);
      ilc::finalize_mean(m);
      rows.push_back({"game", "n=" + std::to_string(n), m});
    }
  }

  // Mask metrics need a predicted-mask archive; ground truth comes from the
  // dataset's instance masks. Predicted masks are resampled up to ground-truth
  // resolution before comparison.
  const bool want_abo = std::count(wanted.begin(), wanted.end(), "abo") > 0;
  const bool want_map = std::count(wanted.begin(), wanted.end(), "map") > 0;
  if (want_abo || want_map) {
    ilc::check(!a.masks.empty(),
               "evaluate: abo/map need --masks (archive from score-masks)");
    auto predicted = ilc::io::read_mask_archive(a.masks);
    auto gt_all = ilc::io::read_mask_archive(
        (fs::path(ds.root) / "masks.rle").string());
    std::set<std::string> in_split(ds.ids.begin(), ds.ids.end());
    std::vector<ilc::MaskRecord> gt;
    for (auto& r : gt_all)
      if (in_split.count(r.image_id) > 0) gt.push_back(std::move(r));
    std::map<std::string, std::pair<int, int>> gt_shape;
    for (const auto& r : gt) gt_shape[r.image_id] = {r.mask.h, r.mask.w};
    for (auto& r : predicted) {
      auto it = gt_shape.find(r.image_id);
      if (it == gt_shape.end()) continue;
      if (r.mask.h != it->second.first || r.mask.w != it->second.second)
        r.mask = ilc::resample_nearest(r.mask, it->second.first,
                                       it->second.second);
    }
    if (want_abo)
      rows.push_back(
          {"abo", "overall", ilc::abo(predicted, gt, ds.num_categories())});
    if (want_map)
      for (double thr : {0.25, 0.5, 0.75}) {
        char variant[32];
        std::snprintf(variant, sizeof(variant), "iou=%.2f", thr);
        rows.push_back({"ap", variant,
                        ilc::average_precision(predicted, gt,
                                               ds.num_categories(), thr)});
      }
  }

  ilc::io::write_text(a.out, ilc::format_metric_report(ds.categories, rows));
  std::cout << ilc::format_metric_report(ds.categories, rows);
  std::cout << "report -> " << a.out << "\n";

  // ---- figures ----
  for (const std::string& plot : a.plots) {
    ilc::check(plot == "density" || plot == "rmse-by-count",
               "evaluate: unknown plot '" + plot +
                   "' (known: density, rmse-by-count)");
    fs::create_directories(a.plot_dir);
    if (plot == "density") {
      ilc::check(!a.plot_image.empty(),
                 "evaluate: --plot density needs --image");
      ilc::check(!a.density_dir.empty(),
                 "evaluate: --plot density needs --density");
      ilc::Tensor3 density = ilc::io::read_density(
          (fs::path(a.density_dir) / (a.plot_image + ".density.bin"))
              .string());
      for (int c = 0; c < density.c; ++c) {
        ilc::plot::Canvas canvas = ilc::plot::heatmap(density.channel(c), 8);
        std::string path =
            (fs::path(a.plot_dir) /
             (a.plot_image + "_density_" + ds.categories[size_t(c)] + ".ppm"))
                .string();
        canvas.save(path);
        std::cout << "figure -> " << path << "\n";
      }
    } else {  // rmse-by-count
      std::map<int, std::pair<double, long long>> by_count;  // t -> (sse, n)
      for (const auto& cat : samples)
        for (const ilc::CountSample& s : cat) {
          double e = double(s.ground_truth - s.predicted);
          auto& slot = by_count[s.ground_truth];
          slot.first += e * e;
          slot.second += 1;
        }
      ilc::plot::Series series;
      series.color = {200, 40, 40};
      for (const auto& [t, acc] : by_count) {
        series.xs.push_back(double(t));
        series.ys.push_back(std::sqrt(acc.first / double(acc.second)));
      }
      ilc::plot::Canvas canvas = ilc::plot::line_chart({series});
      std::string path =
          (fs::path(a.plot_dir) / "rmse_by_count.ppm").string();
      canvas.save(path);
      std::cout << "figure -> " << path << "\n";
    }
  }
  return 0;
}

// ---- score-masks -----------------------------------------------------------

struct ScoreMasksArgs {
  std::string maps, proposals, responses, out, breakdown, ids, config;
  double alpha = 1.0, beta = 1.0, gamma = 1.0;
  double quantile = 0.5, sigma = 4.0;
  int radius = 1;
  long long seed = 1;
};

int run_score_masks(ScoreMasksArgs& a) {
  if (!fs::exists(a.proposals))
    ilc::io::fail(a.proposals, "proposal archive not found");
  auto proposal_records = ilc::io::read_mask_archive(a.proposals);

  std::vector<std::string> image_ids;
  if (!a.ids.empty()) {
    image_ids = split_csv(a.ids);
  } else {
    for (const auto& entry : fs::directory_iterator(a.maps)) {
      std::string name = entry.path().filename().string();
      const std::string suffix = ".density.bin";
      if (name.size() > suffix.size() &&
          name.substr(name.size() - suffix.size()) == suffix)
        image_ids.push_back(name.substr(0, name.size() - suffix.size()));
    }
    std::sort(image_ids.begin(), image_ids.end());
  }
  ilc::check(!image_ids.empty(),
             "score-masks: no map dumps found under " + a.maps);

  ilc::ScoreWeights weights{a.alpha, a.beta, a.gamma};
  weights.validate();

  std::vector<ilc::io::MaskRecord> selected_records;
  std::string breakdown_text;
  size_t total_peaks = 0, unmatched = 0;

  for (const std::string& id : image_ids) {
    ilc::Tensor3 density = ilc::io::read_density(
        (fs::path(a.maps) / (id + ".density.bin")).string());
    ilc::Tensor3 category = ilc::io::read_density(
        (fs::path(a.maps) / (id + ".category.bin")).string());
    ilc::check(category.c == density.c && category.h == density.h &&
                   category.w == density.w,
               "score-masks: density/category dump shapes differ for " + id);

    // Peaks per category, positive responses only, discovery order.
    std::vector<ilc::PeakEvidence> peaks;
    for (int c = 0; c < category.c; ++c) {
      ilc::Grid m = category.channel(c);
      ilc::peaks::PeakMap pm = ilc::peaks::extract_peaks(m, a.radius);
      for (auto [r, col] : ilc::peaks::peak_positions(pm)) {
        if (pm.values.at(r, col) <= 0.0) continue;
        ilc::PeakEvidence ev;
        ev.row = r;
        ev.col = col;
        ev.category = c;
        peaks.push_back(std::move(ev));
      }
    }

    // Response maps: archived when available, otherwise the documented
    // category-map fallback.
    const std::string response_path =
        a.responses.empty()
            ? ""
            : (fs::path(a.responses) / (id + ".response.bin")).string();
    if (!response_path.empty() && fs::exists(response_path)) {
      ilc::Tensor3 responses = ilc::io::read_density(response_path);
      ilc::check(responses.c == static_cast<int>(peaks.size()),
                 "score-masks: " + response_path + " holds " +
                     std::to_string(responses.c) + " maps but " + id +
                     " has " + std::to_string(peaks.size()) + " peaks");
      for (size_t p = 0; p < peaks.size(); ++p)
        peaks[p].response = responses.channel(static_cast<int>(p));
    } else {
      for (auto& ev : peaks)
        ev.response = ilc::fallback_response(category.channel(ev.category),
                                             ev.row, ev.col, a.sigma);
    }

    ilc::Tensor3 q(category.c, category.h, category.w);
    for (int c = 0; c < category.c; ++c)
      q.set_channel(c, ilc::background_mask(category.channel(c), a.quantile));

    std::vector<ilc::io::MaskRecord> image_proposals;
    for (const auto& r : proposal_records)
      if (r.image_id == id) image_proposals.push_back(r);
    std::vector<ilc::Proposal> proposals = ilc::proposals_from_records(
        image_proposals, density.h, density.w);

    auto selections =
        ilc::select_masks(peaks, proposals, density, q, weights);
    for (auto& rec : ilc::to_mask_records(id, peaks, proposals, selections))
      selected_records.push_back(std::move(rec));
    total_peaks += peaks.size();
    for (const auto& s : selections)
      if (s.proposal_index < 0) ++unmatched;

    if (!a.breakdown.empty()) {
      breakdown_text += "# image " + id + "\n";
      breakdown_text += ilc::format_score_breakdown(
          ilc::score_all(peaks, proposals, density, q, weights));
    }
  }

  ilc::io::write_mask_archive(a.out, selected_records);
  std::cout << "selected " << selected_records.size() << " masks for "
            << total_peaks << " peaks across " << image_ids.size()
            << " images (" << unmatched << " unmatched) -> " << a.out << "\n";
  if (!a.breakdown.empty()) {
    ilc::io::write_text(a.breakdown, breakdown_text);
    std::cout << "score breakdown -> " << a.breakdown << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Image-level supervised object counting: dataset synthesis, two-stage "
      "training, presence-gated counting, metrics, and density-penalized "
      "instance-mask selection.\n"
      "Exit codes: 0 success, 1 usage/config error, 2 runtime failure."};
  app.require_subcommand(1);

  GenSynthArgs gen;
  TrainArgs tr;
  PredictArgs pr;
  EvaluateArgs ev;
  ScoreMasksArgs sm;

  CLI::App* c_gen = app.add_subcommand(
      "gen-synth", "Generate a synthetic shape-counting dataset");
  c_gen->add_option("--out", gen.out, "Output dataset directory (created)")
      ->required();
  c_gen->add_option("--images", gen.gen.num_images, "Number of images");
  c_gen->add_option("--size", gen.gen.image_size, "Square image size, pixels");
  c_gen->add_option("--categories", gen.categories,
                    "Comma-separated category names");
  c_gen->add_option("--p-zero", gen.gen.p_zero,
                    "Probability a category is absent");
  c_gen->add_option("--p-beyond", gen.gen.p_beyond,
                    "Probability of a count above the subitizing range");
  c_gen->add_option("--max-count", gen.gen.max_count, "Largest raw count");
  c_gen->add_option("--occlusion", gen.gen.occlusion_rate,
                    "Allowed pairwise box overlap in [0,1]");
  c_gen->add_option("--min-radius", gen.gen.min_radius, "Smallest shape radius");
  c_gen->add_option("--max-radius", gen.gen.max_radius, "Largest shape radius");
  c_gen->add_option("--train-fraction", gen.gen.train_fraction,
                    "Share of images tagged train");
  c_gen->add_option("--seed", gen.seed, "Generation seed");
  c_gen->add_option("--config", gen.config,
                    "Config file ([gen-synth] section)");

  CLI::App* c_train = app.add_subcommand(
      "train", "Two-stage training on a dataset directory");
  c_train->add_option("--data", tr.data, "Dataset root (train split is used)")
      ->required();
  c_train->add_option("--out", tr.out, "Output directory for checkpoints/logs")
      ->required();
  c_train->add_option("--stage", tr.stage, "1, 2, or all (default all)");
  c_train->add_option("--resume", tr.resume, "Checkpoint to continue from");
  c_train->add_option("--backbone-lr", tr.train.backbone_lr,
                      "Backbone learning rate");
  c_train->add_option("--head-lr", tr.train.head_lr, "Head learning rate");
  c_train->add_option("--momentum", tr.train.momentum, "SGD momentum");
  c_train->add_option("--weight-decay", tr.train.weight_decay, "L2 decay");
  c_train->add_option("--batch-size", tr.train.batch_size, "Mini-batch size");
  c_train->add_option("--lambda-rank", tr.train.lambda_rank,
                      "Ranking-loss weight");
  c_train->add_option("--negative-fraction", tr.train.negative_fraction,
                      "Share of absent categories sampled per image");
  c_train->add_option("--stage1-epochs", tr.train.stage1_epochs,
                      "Epochs for stage 1");
  c_train->add_option("--stage2-epochs", tr.train.stage2_epochs,
                      "Epochs for stage 2");
  c_train->add_flag("--flip", tr.train.flip_augmentation,
                    "Random horizontal flips");
  c_train->add_option("--lr-decay-every", tr.train.lr_decay_every,
                      "Epochs between step decays (0 disables)");
  c_train->add_option("--lr-decay-factor", tr.train.lr_decay_factor,
                      "Multiplier at each decay");
  c_train->add_option("--seed", tr.seed, "Training seed");
  c_train->add_option("--config", tr.config, "Config file ([train] section)");

  CLI::App* c_pred = app.add_subcommand(
      "predict", "Per-category counts from a checkpoint");
  c_pred->add_option("--checkpoint", pr.checkpoint, "Checkpoint file")
      ->required();
  c_pred->add_option("--data", pr.data, "Dataset root")->required();
  c_pred->add_option("--out", pr.out, "Output directory")->required();
  c_pred->add_option("--split", pr.split, "Split tag (default test)");
  c_pred->add_option("--ids", pr.ids,
                     "Comma-separated image ids (default: whole split)");
  c_pred->add_flag("--export-density", pr.export_density,
                   "Also dump density and category maps per image");
  c_pred->add_option("--seed", pr.seed, "Unused; accepted for uniformity");
  c_pred->add_option("--config", pr.config, "Config file ([predict] section)");

  CLI::App* c_eval = app.add_subcommand(
      "evaluate", "Counting/segmentation metrics and figures");
  c_eval->add_option("--predictions", ev.predictions, "Prediction dump file")
      ->required();
  c_eval->add_option("--data", ev.data, "Dataset root")->required();
  c_eval->add_option("--split", ev.split, "Split tag (default test)");
  c_eval->add_option("--metrics", ev.metrics,
                     "Comma list: mrmse, mrmse-nz, relrmse, relrmse-nz, game, "
                     "abo, map");
  c_eval->add_option("--out", ev.out, "Report file");
  c_eval->add_option("--density", ev.density_dir,
                     "Maps dir from predict --export-density (game/plots)");
  c_eval->add_option("--masks", ev.masks,
                     "Predicted instance-mask archive (abo/map)");
  c_eval->add_option("--plot", ev.plots,
                     "Figure to emit: density | rmse-by-count (repeatable)");
  c_eval->add_option("--image", ev.plot_image, "Image id for --plot density");
  c_eval->add_option("--plot-dir", ev.plot_dir, "Directory for figures");
  c_eval->add_option("--seed", ev.seed, "Unused; accepted for uniformity");
  c_eval->add_option("--config", ev.config, "Config file ([evaluate] section)");

  CLI::App* c_score = app.add_subcommand(
      "score-masks", "Select instance masks from proposals per response peak");
  c_score->add_option("--maps", sm.maps,
                      "Maps dir from predict --export-density")
      ->required();
  c_score->add_option("--proposals", sm.proposals, "Proposal mask archive")
      ->required();
  c_score->add_option("--responses", sm.responses,
                      "Optional dir of per-image response dumps");
  c_score->add_option("--out", sm.out, "Output instance-mask archive")
      ->required();
  c_score->add_option("--breakdown", sm.breakdown,
                      "Optional per-pair score breakdown file");
  c_score->add_option("--ids", sm.ids, "Comma-separated image ids");
  c_score->add_option("--alpha", sm.alpha, "Weight on response inside mask");
  c_score->add_option("--beta", sm.beta, "Weight on background coverage");
  c_score->add_option("--gamma", sm.gamma, "Weight on density deviation");
  c_score->add_option("--quantile", sm.quantile,
                      "Background threshold quantile");
  c_score->add_option("--sigma", sm.sigma, "Fallback response window width");
  c_score->add_option("--radius", sm.radius, "Peak neighborhood radius");
  c_score->add_option("--seed", sm.seed, "Unused; accepted for uniformity");
  c_score->add_option("--config", sm.config,
                      "Config file ([score-masks] section)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Collapse CLI11's per-error exit codes onto the documented contract:
    // help/version exit 0, every other parse problem is a usage error.
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    cfg::ParsedConfig file;
    auto overlay = [&](CLI::App* cmd, const std::string& section,
                       const std::string& path) -> bool {
      if (path.empty()) return true;
      if (!load_config_file(path, &file)) return false;
      ConfigOverlay o{&file, cmd, section};
      if (section == "gen-synth") {
        o.fill("--out", "out", &gen.out);
        o.fill("--images", "images", &gen.gen.num_images);
        o.fill("--size", "size", &gen.gen.image_size);
        o.fill("--categories", "categories", &gen.categories);
        o.fill("--p-zero", "p_zero", &gen.gen.p_zero);
        o.fill("--p-beyond", "p_beyond", &gen.gen.p_beyond);
        o.fill("--max-count", "max_count", &gen.gen.max_count);
        o.fill("--occlusion", "occlusion", &gen.gen.occlusion_rate);
        o.fill("--min-radius", "min_radius", &gen.gen.min_radius);
        o.fill("--max-radius", "max_radius", &gen.gen.max_radius);
        o.fill("--train-fraction", "train_fraction", &gen.gen.train_fraction);
        o.fill("--seed", "seed", &gen.seed);
      } else if (section == "train") {
        o.fill("--data", "data", &tr.data);
        o.fill("--out", "out", &tr.out);
        o.fill("--stage", "stage", &tr.stage);
        o.fill("--resume", "resume", &tr.resume);
        o.fill("--backbone-lr", "backbone_lr", &tr.train.backbone_lr);
        o.fill("--head-lr", "head_lr", &tr.train.head_lr);
        o.fill("--momentum", "momentum", &tr.train.momentum);
        o.fill("--weight-decay", "weight_decay", &tr.train.weight_decay);
        o.fill("--batch-size", "batch_size", &tr.train.batch_size);
        o.fill("--lambda-rank", "lambda_rank", &tr.train.lambda_rank);
        o.fill("--negative-fraction", "negative_fraction",
               &tr.train.negative_fraction);
        o.fill("--stage1-epochs", "stage1_epochs", &tr.train.stage1_epochs);
        o.fill("--stage2-epochs", "stage2_epochs", &tr.train.stage2_epochs);
        o.fill("--flip", "flip", &tr.train.flip_augmentation);
        o.fill("--lr-decay-every", "lr_decay_every", &tr.train.lr_decay_every);
        o.fill("--lr-decay-factor", "lr_decay_factor",
               &tr.train.lr_decay_factor);
        o.fill("--seed", "seed", &tr.seed);
      } else if (section == "predict") {
        o.fill("--checkpoint", "checkpoint", &pr.checkpoint);
        o.fill("--data", "data", &pr.data);
        o.fill("--out", "out", &pr.out);
        o.fill("--split", "split", &pr.split);
        o.fill("--ids", "ids", &pr.ids);
        o.fill("--export-density", "export_density", &pr.export_density);
        o.fill("--seed", "seed", &pr.seed);
      } else if (section == "evaluate") {
        o.fill("--predictions", "predictions", &ev.predictions);
        o.fill("--data", "data", &ev.data);
        o.fill("--split", "split", &ev.split);
        o.fill("--metrics", "metrics", &ev.metrics);
        o.fill("--out", "out", &ev.out);
        o.fill("--density", "density", &ev.density_dir);
        o.fill("--masks", "masks", &ev.masks);
        o.fill("--plot-dir", "plot_dir", &ev.plot_dir);
        o.fill("--seed", "seed", &ev.seed);
      } else if (section == "score-masks") {
        o.fill("--maps", "maps", &sm.maps);
        o.fill("--proposals", "proposals", &sm.proposals);
        o.fill("--responses", "responses", &sm.responses);
        o.fill("--out", "out", &sm.out);
        o.fill("--breakdown", "breakdown", &sm.breakdown);
        o.fill("--ids", "ids", &sm.ids);
        o.fill("--alpha", "alpha", &sm.alpha);
        o.fill("--beta", "beta", &sm.beta);
        o.fill("--gamma", "gamma", &sm.gamma);
        o.fill("--quantile", "quantile", &sm.quantile);
        o.fill("--sigma", "sigma", &sm.sigma);
        o.fill("--radius", "radius", &sm.radius);
        o.fill("--seed", "seed", &sm.seed);
      }
      return true;
    };

    if (app.got_subcommand(c_gen)) {
      if (!overlay(c_gen, "gen-synth", gen.config)) return 1;
      return run_gen_synth(gen);
    }
    if (app.got_subcommand(c_train)) {
      if (!overlay(c_train, "train", tr.config)) return 1;
      return run_train(tr);
    }
    if (app.got_subcommand(c_pred)) {
      if (!overlay(c_pred, "predict", pr.config)) return 1;
      return run_predict(pr);
    }
    if (app.got_subcommand(c_eval)) {
      if (!overlay(c_eval, "evaluate", ev.config)) return 1;
      return run_evaluate(ev);
    }
    if (app.got_subcommand(c_score)) {
      if (!overlay(c_score, "score-masks", sm.config)) return 1;
      return run_score_masks(sm);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
