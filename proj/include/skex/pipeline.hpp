#pragma once

// Dataset construction and batch evaluation. Both fan work out over threads
// but write results by index, so output never depends on scheduling.

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "skex/digest.hpp"
#include "skex/error.hpp"
#include "skex/geomkern.hpp"
#include "skex/image_io.hpp"
#include "skex/imaging.hpp"
#include "skex/metrics.hpp"
#include "skex/seqmodel.hpp"
#include "skex/wireframe.hpp"

namespace skex {

namespace fs = std::filesystem;

inline constexpr std::string_view kToolVersion = "skex 1.0.0";

// Every tunable of the toolkit. Serialized as a flat JSON object.
struct Config {
  std::uint64_t seed = 0;
  std::size_t views = 36;
  int image_width = kDefaultImageSize;
  int image_height = kDefaultImageSize;
  double fov_deg = 40.0;
  double camera_radius = 2.0;
  std::vector<double> elevations_deg{20.0, 40.0, 60.0};
  double blur_sigma = kDefaultBlurSigma;
  double edge_low = kDefaultLowThreshold;
  double edge_high = kDefaultHighThreshold;
  double sagitta = kDefaultSagitta;
  double surface_band = kDefaultBandFraction;
  double closure_tol = 1e-6;
  double bind_eps = kDefaultBindThreshold;
  std::size_t loi_samples = kDefaultLoiSamples;
  double jitter_sigma = 1.0;
  double drop_rate = 0.1;
  std::size_t clutter = 20;
  int param_tolerance = kDefaultParamTolerance;
  double loss_lambda = kDefaultLossWeight;
  std::size_t cd_samples = kDefaultChamferSamples;
  std::string cd_normalization = "bbox_unit_diagonal";
  std::string cd_distance = "squared_two_sided_mean";

  nlohmann::ordered_json to_json() const {
    return {{"seed", seed},
            {"views", views},
            {"image_width", image_width},
            {"image_height", image_height},
            {"fov_deg", fov_deg},
            {"camera_radius", camera_radius},
            {"elevations_deg", elevations_deg},
            {"blur_sigma", blur_sigma},
            {"edge_low", edge_low},
            {"edge_high", edge_high},
            {"sagitta", sagitta},
            {"surface_band", surface_band},
            {"closure_tol", closure_tol},
            {"bind_eps", bind_eps},
            {"loi_samples", loi_samples},
            {"jitter_sigma", jitter_sigma},
            {"drop_rate", drop_rate},
            {"clutter", clutter},
            {"param_tolerance", param_tolerance},
            {"loss_lambda", loss_lambda},
            {"cd_samples", cd_samples},
            {"cd_normalization", cd_normalization},
            {"cd_distance", cd_distance},
            {"n_max", kMaxCommands},
            {"quant_levels", kQuantLevels}};
  }

  // Overrides defaults with the keys present; unknown keys are rejected.
  static Config from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw SchemaError("config must be a flat JSON object");
    Config c;
    const auto known = c.to_json();
    for (const auto& [key, value] : j.items()) {
      if (!known.contains(key)) throw SchemaError("unknown config key '" + key + "'");
      if (value.is_object()) throw SchemaError("config key '" + key + "' must not be nested");
    }
    auto get = [&](const char* key, auto& field) {
      if (!j.contains(key)) return;
      try {
        j.at(key).get_to(field);
      } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("config key '") + key + "': " + e.what());
      }
    };
    get("seed", c.seed);
    get("views", c.views);
    get("image_width", c.image_width);
    get("image_height", c.image_height);
    get("fov_deg", c.fov_deg);
    get("camera_radius", c.camera_radius);
    get("elevations_deg", c.elevations_deg);
    get("blur_sigma", c.blur_sigma);
    get("edge_low", c.edge_low);
    get("edge_high", c.edge_high);
    get("sagitta", c.sagitta);
    get("surface_band", c.surface_band);
    get("closure_tol", c.closure_tol);
    get("bind_eps", c.bind_eps);
    get("loi_samples", c.loi_samples);
    get("jitter_sigma", c.jitter_sigma);
    get("drop_rate", c.drop_rate);
    get("clutter", c.clutter);
    get("param_tolerance", c.param_tolerance);
    get("loss_lambda", c.loss_lambda);
    get("cd_samples", c.cd_samples);
    get("cd_normalization", c.cd_normalization);
    get("cd_distance", c.cd_distance);
    if (j.contains("n_max") && j["n_max"] != kMaxCommands) throw SchemaError("n_max is fixed at 60");
    if (j.contains("quant_levels") && j["quant_levels"] != kQuantLevels)
      throw SchemaError("quant_levels is fixed at 256");
    if (c.cd_normalization != "bbox_unit_diagonal" || c.cd_distance != "squared_two_sided_mean")
      throw SchemaError("unsupported chamfer convention");
    return c;
  }

  static Config load(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read config " + path.string());
    try {
      return from_json(nlohmann::json::parse(is));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("malformed config " + path.string() + ": " + e.what());
    }
  }

  std::vector<Camera> cameras() const {
    std::vector<double> elev;
    for (double d : elevations_deg) elev.push_back(d * kPi / 180.0);
    return camera_ring(views, camera_radius, elev, fov_deg * kPi / 180.0, image_width, image_height);
  }

  SampleOptions sample_options() const {
    SampleOptions o;
    o.band_fraction = surface_band;
    return o;
  }
};

struct RunOptions {
  unsigned threads = 0;  // 0: hardware concurrency
  std::ostream* log = &std::clog;
};

// Runs fn(i) for i in [0, n) on a small pool. The first exception escaping
// fn is rethrown after all workers finish.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex m;
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next++) < n;) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(m);
            if (!failure) failure = std::current_exception();
            next = n;
          }
        }
      });
  }
  if (failure) std::rethrow_exception(failure);
}

inline std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, std::string_view text) {
  std::ofstream os(path, std::ios::binary);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw IoError("cannot write " + path.string());
}

// ---------------------------------------------------------------------------
// Dedup and split

struct DedupResult {
  std::vector<CadSequence> kept;
  std::vector<std::size_t> kept_indices;  // positions in the input
  std::vector<std::string> digests;       // token digest per kept sequence
  std::size_t invalid = 0;
  std::size_t duplicates = 0;
};

// Drops invalid sequences, then keeps the first sequence of every distinct
// token matrix.
inline DedupResult dedup(const std::vector<CadSequence>& seqs, const ValidateOptions& opt = {}) {
  DedupResult r;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    std::string digest;
    try {
      if (!validate(seqs[i], opt).valid()) {
        ++r.invalid;
        continue;
      }
      digest = token_digest(quantize(seqs[i]));
    } catch (const Error&) {
      ++r.invalid;
      continue;
    }
    if (!seen.insert(digest).second) {
      ++r.duplicates;
      continue;
    }
    r.kept.push_back(seqs[i]);
    r.kept_indices.push_back(i);
    r.digests.push_back(std::move(digest));
  }
  return r;
}

enum class Split { Train, Validation, Test };

inline std::string_view to_string(Split s) {
  return s == Split::Train ? "train" : s == Split::Validation ? "val" : "test";
}

// 90/5/5 assignment keyed by digest, stable across runs and batch contents.
inline Split assign_split(std::string_view digest) {
  const auto bucket = digest_prefix(digest) % 100;
  return bucket < 90 ? Split::Train : bucket < 95 ? Split::Validation : Split::Test;
}

// ---------------------------------------------------------------------------
// Dataset build

struct ViewEntry {
  Camera camera;
  std::string camera_file, render_file, edge_file, proposal_file;
};

struct ModelEntry {
  std::string id;
  std::string sequence_file;
  std::string digest;
  Split split = Split::Train;
  std::vector<ViewEntry> views;
};

struct DatasetManifest {
  std::vector<ModelEntry> models;
  std::size_t inputs = 0;
  std::size_t parse_failures = 0;
  std::size_t invalid_removed = 0;
  std::size_t duplicates_removed = 0;
  std::size_t skipped = 0;
  std::vector<std::string> skipped_ids;
  nlohmann::ordered_json config;
  std::map<std::string, std::string> file_digests;  // relative path -> sha256
};

inline nlohmann::ordered_json to_json(const DatasetManifest& m) {
  nlohmann::ordered_json models = nlohmann::ordered_json::array();
  for (const auto& e : m.models) {
    nlohmann::ordered_json views = nlohmann::ordered_json::array();
    for (const auto& v : e.views)
      views.push_back({{"camera", to_json(v.camera)},
                       {"camera_file", v.camera_file},
                       {"render", v.render_file},
                       {"edges", v.edge_file},
                       {"proposals", v.proposal_file}});
    models.push_back({{"id", e.id},
                      {"sequence", e.sequence_file},
                      {"token_digest", e.digest},
                      {"split", std::string(to_string(e.split))},
                      {"views", std::move(views)}});
  }
  nlohmann::ordered_json digests = nlohmann::ordered_json::object();
  for (const auto& [path, d] : m.file_digests) digests[path] = d;
  return {{"tool_version", std::string(kToolVersion)},
          {"config", m.config},
          {"counts",
           {{"inputs", m.inputs},
            {"parse_failures", m.parse_failures},
            {"invalid_removed", m.invalid_removed},
            {"duplicates_removed", m.duplicates_removed},
            {"skipped", m.skipped},
            {"models", m.models.size()},
            {"views_per_model", m.config.value("views", 0)}}},
          {"skipped_ids", m.skipped_ids},
          {"models", std::move(models)},
          {"files", std::move(digests)}};
}

inline std::uint64_t derived_seed(std::uint64_t seed, std::string_view id, std::size_t view) {
  return digest_prefix(std::to_string(seed) + ":" + std::string(id) + ":" + std::to_string(view));
}

namespace detail {
inline std::string view_name(std::size_t v, std::string_view kind, std::string_view ext) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "view_%02zu", v);
  return std::string(buf) + "." + std::string(kind) + ext.data();
}
}  // namespace detail

// Renders, edge-maps and proposes wireframes for one model into dir.
inline ModelEntry build_model_views(const std::string& id, const CadSequence& seq, const std::string& digest,
                                    const fs::path& out_dir, const Config& cfg, const RunOptions& run) {
  const SolidModel model = normalize_model(execute(seq, cfg.sagitta, {cfg.closure_tol}));
  const TriangleMesh mesh = export_mesh(model);
  const std::vector<Camera> cams = cfg.cameras();

  const fs::path rel_dir = fs::path("models") / id;
  fs::create_directories(out_dir / rel_dir);
  ModelEntry entry{id, (rel_dir / "sequence.json").generic_string(), digest, assign_split(digest), {}};
  write_text(out_dir / entry.sequence_file, serialize_json(seq, 1) + "\n");

  entry.views.resize(cams.size());
  parallel_for(cams.size(), run.threads, [&](std::size_t v) {
    ViewEntry& ve = entry.views[v];
    ve.camera = cams[v];
    ve.camera_file = (rel_dir / detail::view_name(v, "camera", ".json")).generic_string();
    ve.render_file = (rel_dir / detail::view_name(v, "render", ".png")).generic_string();
    ve.edge_file = (rel_dir / detail::view_name(v, "edges", ".png")).generic_string();
    ve.proposal_file = (rel_dir / detail::view_name(v, "proposals", ".json")).generic_string();

    const GrayImage img = render(mesh, cams[v]);
    write_png(out_dir / ve.render_file, to_gray8(img));
    write_png(out_dir / ve.edge_file, to_gray8(edge_map(img, cfg.blur_sigma, cfg.edge_low, cfg.edge_high)));

    OracleOptions oo;
    oo.jitter_sigma = cfg.jitter_sigma;
    oo.drop_rate = cfg.drop_rate;
    oo.clutter = cfg.clutter;
    oo.seed = derived_seed(cfg.seed, id, v);
    const OracleProposals props = oracle_proposals(model, cams[v], oo);
    write_text(out_dir / ve.proposal_file, proposals_to_json(props.lines, props.endpoints).dump() + "\n");
    write_text(out_dir / ve.camera_file, to_json(cams[v]).dump(1) + "\n");
  });
  return entry;
}

inline std::vector<fs::path> list_files(const fs::path& dir, std::string_view ext) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline DatasetManifest dataset_build(const fs::path& seq_dir, const fs::path& out_dir, const Config& cfg,
                                     const RunOptions& run = {}) {
  DatasetManifest man;
  man.config = cfg.to_json();
  const auto files = list_files(seq_dir, ".json");
  man.inputs = files.size();

  std::vector<CadSequence> seqs;
  std::vector<std::string> ids;
  for (const auto& f : files) {
    try {
      seqs.push_back(parse_json(read_text(f)));
      ids.push_back(f.stem().string());
    } catch (const IoError&) {
      throw;
    } catch (const Error& e) {
      ++man.parse_failures;
      *run.log << "skip " << f.filename().string() << ": " << e.what() << '\n';
    }
  }
  const DedupResult dd = dedup(seqs, {cfg.closure_tol});
  man.invalid_removed = dd.invalid;
  man.duplicates_removed = dd.duplicates;

  fs::create_directories(out_dir);
  for (std::size_t k = 0; k < dd.kept.size(); ++k) {
    const std::string& id = ids[dd.kept_indices[k]];
    try {
      man.models.push_back(build_model_views(id, dd.kept[k], dd.digests[k], out_dir, cfg, run));
      *run.log << "built " << id << " (" << k + 1 << "/" << dd.kept.size() << ")\n";
    } catch (const IoError&) {
      throw;
    } catch (const Error& e) {
      ++man.skipped;
      man.skipped_ids.push_back(id);
      *run.log << "skip " << id << ": " << e.what() << '\n';
    }
  }

  for (const auto& m : man.models) {
    man.file_digests[m.sequence_file] = file_sha256(out_dir / m.sequence_file);
    for (const auto& v : m.views)
      for (const auto* f : {&v.camera_file, &v.render_file, &v.edge_file, &v.proposal_file})
        man.file_digests[*f] = file_sha256(out_dir / *f);
  }
  const fs::path tmp = out_dir / "manifest.json.tmp";
  write_text(tmp, to_json(man).dump(1) + "\n");
  fs::rename(tmp, out_dir / "manifest.json");
  return man;
}

// Files listed in the manifest that are missing or whose digest differs.
inline std::vector<std::string> verify_manifest(const fs::path& dataset_dir) {
  const auto doc = nlohmann::json::parse(read_text(dataset_dir / "manifest.json"));
  std::vector<std::string> problems;
  for (const auto& [path, digest] : doc.at("files").items()) {
    const fs::path p = dataset_dir / path;
    if (!fs::exists(p))
      problems.push_back(path + ": missing");
    else if (file_sha256(p) != digest.get<std::string>())
      problems.push_back(path + ": digest mismatch");
  }
  return problems;
}

// ---------------------------------------------------------------------------
// Evaluation

// Sequence files keyed by id. Accepts flat directories of <id>.json or
// <id>.tok files, and dataset directories (models/<id>/sequence.json).
inline std::map<std::string, fs::path> list_sequences(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  fs::path root = dir;
  if (fs::exists(dir / "manifest.json") && fs::is_directory(dir / "models")) root = dir / "models";
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(root)) {
    const fs::path& p = e.path();
    if (e.is_regular_file() && (p.extension() == ".json" || p.extension() == ".tok"))
      out[p.stem().string()] = p;
    else if (e.is_directory() && fs::exists(p / "sequence.json"))
      out[p.filename().string()] = p / "sequence.json";
  }
  return out;
}

struct PairOutcome {
  std::optional<TokenMatrix> pred_tokens;
  TokenMatrix gt_tokens;
  bool gt_ok = false;
  bool pred_valid = false;
  std::optional<double> cd;
  std::string error;
};

inline PairOutcome evaluate_pair(const std::string& id, const fs::path& pred_file, const fs::path& gt_file,
                                 const Config& cfg) {
  PairOutcome out;
  const std::uint64_t seed = derived_seed(cfg.seed, id, 0);
  PointCloud gt_cloud;
  try {
    const CadSequence gt = parse_json(read_text(gt_file));
    out.gt_tokens = quantize(gt);
    gt_cloud = normalize_points(
        sample_surface(execute(gt, cfg.sagitta, {cfg.closure_tol}), cfg.cd_samples, seed, cfg.sample_options()));
    out.gt_ok = true;
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    out.error = id + ": ground truth unusable: " + e.what();
    return out;
  }

  try {
    CadSequence pred;
    ValidateOptions vopt{cfg.closure_tol};
    if (pred_file.extension() == ".tok") {
      std::ifstream is(pred_file, std::ios::binary);
      if (!is) throw IoError("cannot read " + pred_file.string());
      out.pred_tokens = read_tokens(is);
      pred = dequantize(*out.pred_tokens);
      vopt.closure_tol = kDequantizedClosureTol;
    } else {
      pred = parse_json(read_text(pred_file));
      out.pred_tokens = quantize(pred);
    }
    if (!validate(pred, vopt).valid()) return out;
    const PointCloud pc = normalize_points(
        sample_surface(execute(pred, cfg.sagitta, vopt), cfg.cd_samples, seed, cfg.sample_options()));
    out.pred_valid = true;
    out.cd = chamfer(pc, gt_cloud);
  } catch (const IoError&) {
    throw;
  } catch (const Error&) {
    // Invalid prediction; tokens are kept for accuracy when they decoded.
  }
  return out;
}

inline MetricReport eval_run(const fs::path& pred_dir, const fs::path& gt_dir, const Config& cfg,
                             const RunOptions& run = {}) {
  const auto preds = list_sequences(pred_dir);
  const auto gts = list_sequences(gt_dir);
  std::vector<std::string> orphans;
  for (const auto& [id, _] : preds)
    if (!gts.contains(id)) orphans.push_back("prediction without ground truth: " + id);
  for (const auto& [id, _] : gts)
    if (!preds.contains(id)) orphans.push_back("ground truth without prediction: " + id);
  if (!orphans.empty()) {
    std::string msg = "unpaired files:";
    for (const auto& o : orphans) msg += "\n  " + o;
    throw PairingError(msg);
  }

  std::vector<std::string> ids;
  for (const auto& [id, _] : gts) ids.push_back(id);
  std::vector<PairOutcome> outcomes(ids.size());
  parallel_for(ids.size(), run.threads,
               [&](std::size_t i) { outcomes[i] = evaluate_pair(ids[i], preds.at(ids[i]), gts.at(ids[i]), cfg); });

  MetricReport rep;
  rep.config = cfg.to_json();
  Ratio cmd, prm;
  std::size_t invalid = 0;
  double cd_sum = 0;
  for (const auto& o : outcomes) {
    if (!o.gt_ok) {
      rep.errors.push_back(o.error);
      continue;
    }
    ++rep.sequences;
    if (o.pred_tokens) {
      cmd += command_hits(*o.pred_tokens, o.gt_tokens);
      prm += param_hits(*o.pred_tokens, o.gt_tokens, cfg.param_tolerance);
    }
    if (!o.pred_valid) {
      ++invalid;
      continue;
    }
    ++rep.valid_pairs;
    cd_sum += *o.cd;
  }
  if (rep.sequences == 0) throw EmptyBatchError("no usable ground-truth sequences");
  rep.cmd_acc = cmd.total ? cmd.value() : 0.0;
  rep.param_acc = prm.total ? prm.value() : 0.0;
  rep.invalid_ratio = invalid_ratio(invalid, rep.sequences);
  if (rep.valid_pairs) rep.cd = cd_sum / static_cast<double>(rep.valid_pairs);
  return rep;
}

}  // namespace skex
