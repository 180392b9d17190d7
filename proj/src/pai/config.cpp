#include "pai/config.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "json.hpp"
#include "pai/io.hpp"
#include "pai/rng.hpp"

namespace pai {

namespace {

using nlohmann::json;

[[noreturn]] void bad_field(const std::string& path, const std::string& what) {
  fail(ErrorCode::config, "config field '" + path + "': " + what);
}

int as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) bad_field(path, "expected an integer");
  return v.get<int>();
}

double as_double(const json& v, const std::string& path) {
  if (!v.is_number()) bad_field(path, "expected a number");
  return v.get<double>();
}

std::uint64_t as_u64(const json& v, const std::string& path) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    bad_field(path, "expected a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) bad_field(path, "expected a string");
  return v.get<std::string>();
}

std::vector<int> as_int_array(const json& v, const std::string& path) {
  if (!v.is_array()) bad_field(path, "expected an array of integers");
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer()) bad_field(path, "expected an array of integers");
    out.push_back(e.get<int>());
  }
  return out;
}

// Leaf setters keyed by dotted path; applying a JSON document walks its
// structure and dispatches through this table, so unknown keys surface with
// their full path.
std::map<std::string, std::function<void(RunConfig&, const json&)>>
make_setters() {
  using S = std::function<void(RunConfig&, const json&)>;
  std::map<std::string, S> t;
  t["grid.nx"] = [](RunConfig& c, const json& v) { c.grid.nx = as_int(v, "grid.nx"); };
  t["grid.ny"] = [](RunConfig& c, const json& v) { c.grid.ny = as_int(v, "grid.ny"); };
  t["grid.nz"] = [](RunConfig& c, const json& v) { c.grid.nz = as_int(v, "grid.nz"); };
  t["grid.dx"] = [](RunConfig& c, const json& v) { c.grid.dx = as_double(v, "grid.dx"); };
  t["grid.dt"] = [](RunConfig& c, const json& v) { c.grid.dt = as_double(v, "grid.dt"); };
  t["grid.nt"] = [](RunConfig& c, const json& v) { c.grid.nt = as_int(v, "grid.nt"); };
  t["grid.c"] = [](RunConfig& c, const json& v) { c.grid.c = as_double(v, "grid.c"); };
  t["grid.sponge_width"] = [](RunConfig& c, const json& v) {
    c.grid.sponge_width = as_int(v, "grid.sponge_width");
  };
  t["grid.sponge_strength"] = [](RunConfig& c, const json& v) {
    c.grid.sponge_strength = as_double(v, "grid.sponge_strength");
  };
  t["geometry.subsample_factor"] = [](RunConfig& c, const json& v) {
    c.subsample_factor = as_int(v, "geometry.subsample_factor");
  };
  t["geometry.scheme"] = [](RunConfig& c, const json& v) {
    c.scheme = subsample_scheme_from_string(as_string(v, "geometry.scheme"));
  };
  t["noise.snr_db"] = [](RunConfig& c, const json& v) {
    c.snr_db = as_double(v, "noise.snr_db");
  };
  t["phantom.n_vessels"] = [](RunConfig& c, const json& v) {
    c.phantom.n_vessels = as_int(v, "phantom.n_vessels");
  };
  t["phantom.radius_min"] = [](RunConfig& c, const json& v) {
    c.phantom.radius_min = as_double(v, "phantom.radius_min");
  };
  t["phantom.radius_max"] = [](RunConfig& c, const json& v) {
    c.phantom.radius_max = as_double(v, "phantom.radius_max");
  };
  t["phantom.curvature"] = [](RunConfig& c, const json& v) {
    c.phantom.curvature = as_double(v, "phantom.curvature");
  };
  t["phantom.branch_prob"] = [](RunConfig& c, const json& v) {
    c.phantom.branch_prob = as_double(v, "phantom.branch_prob");
  };
  t["phantom.intensity_min"] = [](RunConfig& c, const json& v) {
    c.phantom.intensity_min = as_double(v, "phantom.intensity_min");
  };
  t["phantom.intensity_max"] = [](RunConfig& c, const json& v) {
    c.phantom.intensity_max = as_double(v, "phantom.intensity_max");
  };
  t["dataset.n_samples"] = [](RunConfig& c, const json& v) {
    c.n_samples = as_int(v, "dataset.n_samples");
  };
  t["network.state_channels"] = [](RunConfig& c, const json& v) {
    c.network.state_channels = as_int(v, "network.state_channels");
  };
  t["network.n_layers"] = [](RunConfig& c, const json& v) {
    c.network.n_layers = as_int(v, "network.n_layers");
  };
  t["network.hidden_channels"] = [](RunConfig& c, const json& v) {
    c.network.hidden_channels = as_int(v, "network.hidden_channels");
  };
  t["network.kernel_size"] = [](RunConfig& c, const json& v) {
    c.network.kernel_size = as_int(v, "network.kernel_size");
  };
  t["network.leaky_slope"] = [](RunConfig& c, const json& v) {
    c.network.leaky_slope = as_double(v, "network.leaky_slope");
  };
  t["network.squeeze_before"] = [](RunConfig& c, const json& v) {
    c.network.squeeze_before = as_int_array(v, "network.squeeze_before");
  };
  t["network.unsqueeze_before"] = [](RunConfig& c, const json& v) {
    c.network.unsqueeze_before = as_int_array(v, "network.unsqueeze_before");
  };
  t["train.learning_rate"] = [](RunConfig& c, const json& v) {
    c.train.learning_rate = as_double(v, "train.learning_rate");
  };
  t["train.adam_beta1"] = [](RunConfig& c, const json& v) {
    c.train.adam_beta1 = as_double(v, "train.adam_beta1");
  };
  t["train.adam_beta2"] = [](RunConfig& c, const json& v) {
    c.train.adam_beta2 = as_double(v, "train.adam_beta2");
  };
  t["train.adam_eps"] = [](RunConfig& c, const json& v) {
    c.train.adam_eps = as_double(v, "train.adam_eps");
  };
  t["train.epochs_per_stage"] = [](RunConfig& c, const json& v) {
    c.train.epochs_per_stage = as_int(v, "train.epochs_per_stage");
  };
  t["train.batch_size"] = [](RunConfig& c, const json& v) {
    c.train.batch_size = as_int(v, "train.batch_size");
  };
  t["plan.n_stages"] = [](RunConfig& c, const json& v) {
    c.n_stages = as_int(v, "plan.n_stages");
  };
  t["lsqr.max_iters"] = [](RunConfig& c, const json& v) {
    c.lsqr.max_iters = as_int(v, "lsqr.max_iters");
  };
  t["lsqr.atol"] = [](RunConfig& c, const json& v) {
    c.lsqr.atol = as_double(v, "lsqr.atol");
  };
  t["lsqr.btol"] = [](RunConfig& c, const json& v) {
    c.lsqr.btol = as_double(v, "lsqr.btol");
  };
  t["paths.dataset_dir"] = [](RunConfig& c, const json& v) {
    c.dataset_dir = as_string(v, "paths.dataset_dir");
  };
  t["paths.checkpoint_dir"] = [](RunConfig& c, const json& v) {
    c.checkpoint_dir = as_string(v, "paths.checkpoint_dir");
  };
  t["paths.output_dir"] = [](RunConfig& c, const json& v) {
    c.output_dir = as_string(v, "paths.output_dir");
  };
  t["seed"] = [](RunConfig& c, const json& v) { c.seed = as_u64(v, "seed"); };
  t["threads"] = [](RunConfig& c, const json& v) {
    c.threads = as_int(v, "threads");
  };
  return t;
}

const std::map<std::string, std::function<void(RunConfig&, const json&)>>&
setters() {
  static const auto table = make_setters();
  return table;
}

// True when some setter key lives under `path.` — i.e. `path` names a
// known section rather than a leaf.
bool known_section(const std::string& path) {
  const std::string want = path + ".";
  const auto it = setters().lower_bound(want);
  return it != setters().end() && it->first.compare(0, want.size(), want) == 0;
}

void overlay(RunConfig& cfg, const json& node, const std::string& prefix) {
  if (!node.is_object()) {
    // Leaf (or array leaf): dispatch.
    const auto it = setters().find(prefix);
    if (it == setters().end()) {
      fail(ErrorCode::config, "unknown config key '" + prefix + "'");
    }
    it->second(cfg, node);
    return;
  }
  // Arrays are leaves; objects recurse — but two leaf keys are objects'
  // siblings at top level ("seed", "threads"), handled uniformly here.
  if (setters().count(prefix) > 0) {
    fail(ErrorCode::config, "config key '" + prefix + "' expects a scalar");
  }
  // An unknown section must fail even when its object is empty.
  if (!prefix.empty() && !known_section(prefix)) {
    fail(ErrorCode::config, "unknown config key '" + prefix + "'");
  }
  for (const auto& [key, value] : node.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      if (setters().count(path) > 0) {
        fail(ErrorCode::config, "config key '" + path + "' expects a scalar");
      }
      overlay(cfg, value, path);
    } else {
      const auto it = setters().find(path);
      if (it == setters().end()) {
        fail(ErrorCode::config, "unknown config key '" + path + "'");
      }
      it->second(cfg, value);
    }
  }
}

int line_of_offset(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') ++line;
  }
  return line;
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.grid.nx = 64;
  c.grid.ny = 1;
  c.grid.nz = 64;
  c.grid.dx = 1e-3;
  c.grid.dt = 4.5e-7;  // CFL = 0.675 against c = 1500, dx = 1 mm
  c.grid.nt = 128;
  c.grid.c = 1500.0;
  c.grid.sponge_width = 8;
  c.grid.sponge_strength = 0.05;
  c.network.squeeze_before = {4};
  c.network.unsqueeze_before = {11};
  c.train.epochs_per_stage = 40;
  c.train.batch_size = 5;
  return c;
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::config,
         "config parse error at line " +
             std::to_string(line_of_offset(text, e.byte)) + ": " + e.what());
  }
  if (!doc.is_object()) {
    fail(ErrorCode::config, "config root must be a JSON object");
  }
  RunConfig cfg = defaults();
  overlay(cfg, doc, "");
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  return from_json_text(read_text(path));
}

void RunConfig::apply_override(const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    fail(ErrorCode::config,
         "override must look like key.path=value: " + assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;  // unquoted strings pass through verbatim
  }
  if (value.is_object()) {
    fail(ErrorCode::config, "override value must be a scalar or array");
  }
  const auto it = setters().find(path);
  if (it == setters().end()) {
    fail(ErrorCode::config, "unknown config key '" + path + "'");
  }
  it->second(*this, value);
}

std::string RunConfig::to_json() const {
  json j;
  j["grid"] = {{"nx", grid.nx},
               {"ny", grid.ny},
               {"nz", grid.nz},
               {"dx", grid.dx},
               {"dt", grid.dt},
               {"nt", grid.nt},
               {"c", grid.c},
               {"sponge_width", grid.sponge_width},
               {"sponge_strength", grid.sponge_strength}};
  j["geometry"] = {{"subsample_factor", subsample_factor},
                   {"scheme", to_string(scheme)}};
  j["noise"] = {{"snr_db", snr_db}};
  j["phantom"] = {{"n_vessels", phantom.n_vessels},
                  {"radius_min", phantom.radius_min},
                  {"radius_max", phantom.radius_max},
                  {"curvature", phantom.curvature},
                  {"branch_prob", phantom.branch_prob},
                  {"intensity_min", phantom.intensity_min},
                  {"intensity_max", phantom.intensity_max}};
  j["dataset"] = {{"n_samples", n_samples}};
  j["network"] = {{"state_channels", network.state_channels},
                  {"n_layers", network.n_layers},
                  {"hidden_channels", network.hidden_channels},
                  {"kernel_size", network.kernel_size},
                  {"leaky_slope", network.leaky_slope},
                  {"squeeze_before", network.squeeze_before},
                  {"unsqueeze_before", network.unsqueeze_before}};
  j["train"] = {{"learning_rate", train.learning_rate},
                {"adam_beta1", train.adam_beta1},
                {"adam_beta2", train.adam_beta2},
                {"adam_eps", train.adam_eps},
                {"epochs_per_stage", train.epochs_per_stage},
                {"batch_size", train.batch_size}};
  j["plan"] = {{"n_stages", n_stages}};
  j["lsqr"] = {{"max_iters", lsqr.max_iters},
               {"atol", lsqr.atol},
               {"btol", lsqr.btol}};
  j["paths"] = {{"dataset_dir", dataset_dir.string()},
                {"checkpoint_dir", checkpoint_dir.string()},
                {"output_dir", output_dir.string()}};
  j["seed"] = seed;
  j["threads"] = threads;
  return j.dump(2) + "\n";
}

void RunConfig::validate() const {
  SimGrid::validated(grid);
  make_subsampled_geometry(grid, subsample_factor, scheme);  // throws if bad
  if (!std::isfinite(snr_db)) {
    fail(ErrorCode::config, "noise.snr_db must be finite");
  }
  phantom.validate();
  if (n_samples < 1) {
    fail(ErrorCode::config, "dataset.n_samples must be positive");
  }
  StageSpec spec = network;
  spec.cond_channels = 1;
  const int rank = grid.spatial_rank();
  const auto plan = resolve_stage_plan(spec, rank);
  // Spatial divisibility along the squeeze schedule (the plan resolver only
  // checks channel bookkeeping).
  int halvings = 0, max_halvings = 0;
  for (const auto& step : plan) {
    if (step.kind == StageOpKind::squeeze) {
      ++halvings;
      max_halvings = std::max(max_halvings, halvings);
    } else if (step.kind == StageOpKind::unsqueeze) {
      --halvings;
    }
  }
  const int div = 1 << max_halvings;
  const int d0 = grid.nx, d1 = rank == 2 ? grid.nz : grid.ny;
  const int d2 = rank == 2 ? 1 : grid.nz;
  if (d0 % div != 0 || d1 % div != 0 || (rank == 3 && d2 % div != 0)) {
    fail(ErrorCode::config,
         "grid dims must be divisible by " + std::to_string(div) +
             " for the squeeze schedule");
  }
  train.validate();
  if (n_stages < 1) fail(ErrorCode::config, "plan.n_stages must be positive");
  if (lsqr.max_iters < 1) {
    fail(ErrorCode::config, "lsqr.max_iters must be positive");
  }
  if (lsqr.atol < 0 || lsqr.btol < 0) {
    fail(ErrorCode::config, "lsqr tolerances must be nonnegative");
  }
  if (dataset_dir.empty() || checkpoint_dir.empty() || output_dir.empty()) {
    fail(ErrorCode::config, "paths must not be empty");
  }
  if (threads < 1) fail(ErrorCode::config, "threads must be positive");
}

NoiseSpec RunConfig::noise_spec() const {
  return NoiseSpec{snr_db, mix_seed(seed, 1)};
}

PhantomSpec RunConfig::phantom_spec() const {
  PhantomSpec p = phantom;
  p.seed = mix_seed(seed, 2);
  return p;
}

std::uint64_t RunConfig::train_seed() const { return mix_seed(seed, 3); }

std::uint64_t RunConfig::stage_init_seed(int stage) const {
  return mix_seed(seed, 100 + static_cast<std::uint64_t>(stage));
}

ReceiverGeometry RunConfig::make_geometry() const {
  return make_subsampled_geometry(grid, subsample_factor, scheme);
}

}  // namespace pai
