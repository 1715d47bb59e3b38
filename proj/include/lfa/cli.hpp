#pragma once

// Command surface. `run` is the whole program; tools/lfa.cpp only forwards
// argv. Exit codes: 0 success, 1 runtime error, 2 validation error.
//
// Every report embeds the resolved options of its command (flags, then the
// --config file, then defaults), the tool version and FNV-1a hashes of the
// input files. --threads is left out because it never changes results.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "lfa/annotation.hpp"
#include "lfa/baselines.hpp"
#include "lfa/core.hpp"
#include "lfa/init.hpp"
#include "lfa/io.hpp"
#include "lfa/lfa.hpp"
#include "lfa/metrics.hpp"
#include "lfa/random.hpp"
#include "lfa/synth.hpp"
#include "lfa/traversal.hpp"

namespace lfa::cli {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline constexpr const char* kToolName = "lfa";
inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kRuntimeError = 1, kValidationError = 2 };

inline bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::FormatError:
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidThreshold:
    case ErrorCode::InvalidK:
    case ErrorCode::InvalidN:
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidDataset:
    case ErrorCode::SchemaMismatch:
    case ErrorCode::UnknownClassToken:
    case ErrorCode::ImageSetMismatch:
    case ErrorCode::IndexOutOfRange:
    case ErrorCode::DuplicateVote:
      return true;
    default:
      return false;
  }
}

/// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline void write_json(const fs::path& path, const json& doc) { io::write_file(path, doc.dump(2) + "\n"); }

/// "[a,b]" or "{}" as CLI11 prints container defaults.
inline json split_default(std::string s) {
  json out = json::array();
  if (!s.empty() && (s.front() == '[' || s.front() == '{')) s = s.substr(1, s.size() - 2);
  std::size_t start = 0;
  while (start < s.size()) {
    const auto comma = s.find(',', start);
    const auto end = comma == std::string::npos ? s.size() : comma;
    out.push_back(s.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

/// Resolved option values of one (sub)command as strings, in declaration order.
inline json resolved_options(const CLI::App* cmd) {
  json cfg = json::object();
  for (const CLI::Option* opt : cmd->get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "h") continue;
    const bool multi = opt->get_expected_max() > 1 || opt->get_items_expected_max() > 1;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      if (multi) {
        cfg[name] = r;
      } else {
        cfg[name] = r.empty() ? std::string() : r.back();
      }
    } else if (opt->get_type_size() == 0) {
      cfg[name] = false;
    } else if (multi) {
      cfg[name] = split_default(opt->get_default_str());
    } else {
      cfg[name] = opt->get_default_str();
    }
  }
  return cfg;
}

struct Provenance {
  json config;
  json inputs = json::object();

  void add_input(const fs::path& path) { inputs[path.generic_string()] = io::file_hash(path); }

  json stamp(const std::string& command) const {
    json j;
    j["tool"] = kToolName;
    j["version"] = kVersion;
    j["command"] = command;
    j["config"] = config;
    j["inputs"] = inputs;
    return j;
  }
};

struct DatasetArgs {
  std::string embeddings;
  std::string ids;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--embeddings", embeddings, "Embedding file (.lfae)")->required();
    cmd->add_option("--ids", ids, "ids.csv sidecar (default: next to the embedding file)");
  }

  fs::path ids_path() const { return ids.empty() ? io::default_ids_path(embeddings) : fs::path(ids); }

  EmbeddingDataset load(Provenance& prov, std::ostream& err) const {
    auto ds = io::load_dataset(embeddings, ids_path());
    prov.add_input(embeddings);
    prov.add_input(ids_path());
    if (ds.renormalized_rows() > 0) {
      err << "warning: " << ds.renormalized_rows() << " rows had norm further than 1e-3 from 1 and were re-normalized\n";
    }
    return ds;
  }
};

struct SeedSelection {
  std::size_t min_size = 1;
  std::size_t max_seeds = 0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--min-seed-size", min_size, "Ignore seed groups smaller than this")->check(CLI::PositiveNumber);
    cmd->add_option("--max-seeds", max_seeds, "Use at most this many seeds in file order (0 = all)");
  }

  std::vector<io::NamedGroup> apply(std::vector<io::NamedGroup> groups) const {
    std::erase_if(groups, [&](const io::NamedGroup& g) { return g.group.members.size() < min_size; });
    if (max_seeds > 0 && groups.size() > max_seeds) groups.resize(max_seeds);
    return groups;
  }
};

inline std::vector<Group> plain_groups(const std::vector<io::NamedGroup>& named) {
  std::vector<Group> out;
  for (const auto& g : named) out.push_back(g.group);
  return out;
}

inline std::string summarize_sizes(std::span<const Group> groups) {
  if (groups.empty()) return "0 groups";
  std::size_t total = 0;
  std::size_t largest = 0;
  for (const auto& g : groups) {
    total += g.members.size();
    largest = std::max(largest, g.members.size());
  }
  std::ostringstream os;
  os << groups.size() << " groups, mean size " << format_double(static_cast<double>(total) / static_cast<double>(groups.size()))
     << ", largest " << largest;
  return os.str();
}

// ---------------------------------------------------------------------------

class Program {
 public:
  Program(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(int argc, const char* const* argv) {
    CLI::App app{"Latent direction discovery and bias auditing for embedding datasets", kToolName};
    app.option_defaults()->always_capture_default();
    app.set_config("--config", "", "TOML config file; command-line flags take precedence");
    app.set_version_flag("--version", kVersion);
    app.add_option("--threads", threads_, "Worker threads (results do not depend on this)")->check(CLI::PositiveNumber);
    app.require_subcommand(1);
    app.fallthrough();

    add_validate(app);
    add_synth(app);
    add_init_groups(app);
    add_lfa_run(app);
    add_baseline(app);
    add_coherence(app);
    add_bias_report(app);
    add_consensus(app);
    add_traverse(app);
    add_match_size(app);

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out_, err_);
      return code == 0 ? kOk : kValidationError;
    }

    if (const auto* cfg = app.get_config_ptr(); cfg != nullptr && cfg->count() > 0) {
      config_path_ = cfg->as<std::string>();
    }
    try {
      return action_();
    } catch (const Error& e) {
      err_ << "error: " << e.what() << "\n";
      return is_validation_error(e.code()) ? kValidationError : kRuntimeError;
    } catch (const std::exception& e) {
      err_ << "error: " << e.what() << "\n";
      return kRuntimeError;
    }
  }

 private:
  template <typename Fn>
  void bind(CLI::App* cmd, Fn fn) {
    cmd->callback([this, cmd, fn] {
      action_ = [this, cmd, fn] {
        Provenance prov;
        prov.config = resolved_options(cmd);
        if (!config_path_.empty()) prov.add_input(config_path_);
        return fn(prov);
      };
    });
  }

  // -- validate -------------------------------------------------------------
  void add_validate(CLI::App& app) {
    auto* cmd = app.add_subcommand("validate", "Check an embedding file and its sidecars");
    auto a = std::make_shared<std::tuple<std::string, std::string, std::string, std::string>>();
    cmd->add_option("embeddings", std::get<0>(*a), "Embedding file (.lfae)")->required();
    cmd->add_option("--ids", std::get<1>(*a), "ids.csv sidecar (default: next to the embedding file, if present)");
    cmd->add_option("--attributes", std::get<2>(*a), "Attribute CSV to cross-check");
    cmd->add_option("--groups", std::get<3>(*a), "Group CSV to cross-check");
    bind(cmd, [this, a](Provenance&) {
      const auto& [emb, ids, attrs, groups] = *a;
      const auto raw = io::read_embeddings(emb);
      out_ << emb << ": " << raw.rows << " rows x " << raw.dim << " dims, "
           << (io::kHeaderBytes + 4 * raw.rows * raw.dim) << " bytes\n";
      fs::path ids_path = ids.empty() ? io::default_ids_path(emb) : fs::path(ids);
      if (!ids.empty() || fs::exists(ids_path)) {
        const auto ds = io::load_dataset(emb, ids_path);
        out_ << ids_path.generic_string() << ": " << ds.size() << " images, " << ds.identity_count() << " identities";
        if (ds.renormalized_rows() > 0) out_ << ", " << ds.renormalized_rows() << " rows re-normalized";
        out_ << "\n";
        if (!attrs.empty()) {
          const auto table = io::read_attributes(attrs);
          std::size_t missing = 0;
          for (const auto& id : table.image_ids()) missing += !ds.find(id).has_value();
          if (missing > 0) {
            throw Error(ErrorCode::FormatError, attrs + ": " + std::to_string(missing) + " rows name unknown images");
          }
          out_ << attrs << ": " << table.rows() << " rows, " << table.attribute_count() << " attributes\n";
        }
        if (!groups.empty()) {
          const auto g = io::read_groups(groups, ds);
          out_ << groups << ": " << g.size() << " groups\n";
        }
      } else if (!attrs.empty() || !groups.empty()) {
        throw Error(ErrorCode::FormatError, "cross-checks need the ids sidecar");
      }
      out_ << "ok\n";
      return kOk;
    });
  }

  // -- synth ----------------------------------------------------------------
  void add_synth(CLI::App& app) {
    auto* cmd = app.add_subcommand("synth", "Generate a synthetic dataset with planted attributes");
    struct Args {
      std::string out;
      std::uint64_t seed = 0;
      SynthConfig cfg;
      std::vector<std::string> attributes;
    };
    auto a = std::make_shared<Args>();
    cmd->add_option("--out", a->out, "Output directory")->required();
    cmd->add_option("--seed", a->seed, "RNG seed")->required();
    cmd->add_option("--dim", a->cfg.dim, "Embedding dimension")->check(CLI::Range(2, 1 << 20));
    cmd->add_option("--identities", a->cfg.n_identities, "Number of identities")->check(CLI::PositiveNumber);
    cmd->add_option("--images-min", a->cfg.images_min, "Minimum images per identity")->check(CLI::PositiveNumber);
    cmd->add_option("--images-max", a->cfg.images_max, "Maximum images per identity")->check(CLI::PositiveNumber);
    cmd->add_option("--spread", a->cfg.identity_spread, "RMS norm of per-image noise")->check(CLI::NonNegativeNumber);
    cmd->add_option("--attribute", a->attributes, "Planted attribute as strength:fraction (repeatable)");
    bind(cmd, [this, a](Provenance& prov) {
      SynthConfig cfg = a->cfg;
      cfg.rng_seed = a->seed;
      for (const auto& spec : a->attributes) cfg.attributes.push_back(parse_attribute(spec));
      const auto gen = generate(cfg);

      const fs::path dir = a->out;
      io::save_dataset(gen.dataset, dir / "embeddings.lfae", dir / "ids.csv");
      io::write_file(dir / "attributes.csv", io::encode_attributes(gen.attributes));

      json truth;
      truth["images"] = gen.dataset.size();
      truth["identities"] = cfg.n_identities;
      truth["attributes"] = json::array();
      for (std::size_t k = 0; k < cfg.attributes.size(); ++k) {
        json attr;
        attr["name"] = "attr" + std::to_string(k);
        attr["strength"] = gen.truth.strengths[k];
        attr["fraction"] = cfg.attributes[k].fraction;
        attr["direction"] = gen.truth.directions[k];
        json affected = json::array();
        for (std::size_t id : gen.truth.affected_identities[k]) affected.push_back(synth_identity_key(id));
        attr["affected_identities"] = affected;
        std::size_t positives = 0;
        for (bool b : gen.truth.planted[k]) positives += b;
        attr["positive_images"] = positives;
        truth["attributes"].push_back(attr);
      }
      json doc = prov.stamp("synth");
      doc["ground_truth"] = truth;
      write_json(dir / "ground_truth.json", doc);

      out_ << "wrote " << gen.dataset.size() << " images of " << cfg.n_identities << " identities (d="
           << cfg.dim << ", " << cfg.attributes.size() << " planted attributes) to " << dir.generic_string() << "\n";
      return kOk;
    });
  }

  static PlantedAttribute parse_attribute(const std::string& spec) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) throw Error(ErrorCode::InvalidConfig, "attribute '" + spec + "' is not strength:fraction");
    PlantedAttribute p;
    try {
      std::size_t used = 0;
      p.strength = std::stod(spec.substr(0, colon), &used);
      if (used != colon) throw std::invalid_argument("trailing");
      const std::string frac = spec.substr(colon + 1);
      p.fraction = std::stod(frac, &used);
      if (used != frac.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidConfig, "attribute '" + spec + "' is not strength:fraction");
    }
    return p;
  }

  // -- init-groups ----------------------------------------------------------
  void add_init_groups(CLI::App& app) {
    auto* cmd = app.add_subcommand("init-groups", "Seed groups from similarity-graph components");
    struct Args {
      DatasetArgs data;
      double threshold = kDefaultGraphThreshold;
      std::size_t min_size = 1;
      std::string out;
    };
    auto a = std::make_shared<Args>();
    a->data.add_to(cmd);
    cmd->add_option("--threshold", a->threshold, "Cosine similarity edge threshold")->check(CLI::Range(-1.0, 1.0));
    cmd->add_option("--min-size", a->min_size, "Only write components with at least this many members")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--out", a->out, "Output directory")->required();
    bind(cmd, [this, a](Provenance& prov) {
      const auto ds = a->data.load(prov, err_);
      const auto graph = build_similarity_graph(ds, a->threshold, threads_);
      const auto comps = connected_components(graph);

      std::vector<io::NamedGroup> named;
      std::size_t singletons = 0;
      std::size_t largest = 0;
      for (std::size_t c = 0; c < comps.size(); ++c) {
        singletons += comps[c].members.size() == 1;
        largest = std::max(largest, comps[c].members.size());
        if (comps[c].members.size() >= a->min_size) named.push_back({component_id(c), comps[c]});
      }
      const fs::path dir = a->out;
      io::write_file(dir / "seeds.csv", io::encode_groups(named, ds));

      json doc = prov.stamp("init-groups");
      doc["nodes"] = graph.node_count;
      doc["edges"] = graph.edge_count();
      doc["components"] = comps.size();
      doc["singletons"] = singletons;
      doc["largest_component"] = largest;
      doc["written_groups"] = named.size();
      write_json(dir / "init_report.json", doc);

      out_ << graph.node_count << " nodes, " << graph.edge_count() << " edges at threshold "
           << format_double(a->threshold) << ": " << comps.size() << " components (" << singletons
           << " singletons, largest " << largest << "); wrote " << named.size() << " seeds\n";
      return kOk;
    });
  }

  static std::string component_id(std::size_t c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "c%06zu", c);
    return buf;
  }

  // -- lfa-run --------------------------------------------------------------
  void add_lfa_run(CLI::App& app) {
    auto* cmd = app.add_subcommand("lfa-run", "Grow every seed group along its latent direction");
    struct Args {
      DatasetArgs data;
      std::string seeds;
      double tau = 0.5;
      SeedSelection select;
      std::string out;
    };
    auto a = std::make_shared<Args>();
    a->data.add_to(cmd);
    cmd->add_option("--seeds", a->seeds, "Seed group CSV")->required();
    cmd->add_option("--tau", a->tau, "Projection threshold in (0, 1)")->required();
    a->select.add_to(cmd);
    cmd->add_option("--out", a->out, "Output directory")->required();
    bind(cmd, [this, a](Provenance& prov) {
      check_tau(a->tau);
      const auto ds = a->data.load(prov, err_);
      const auto seeds = a->select.apply(io::read_groups(a->seeds, ds));
      prov.add_input(a->seeds);
      const auto plain = plain_groups(seeds);
      const auto outcomes = run_all(ds, a->tau, plain, threads_);

      std::vector<io::NamedGroup> grown;
      std::vector<double> dir_rows;
      json manifest = json::array();
      json traces = json::array();
      json summary = json::array();
      std::size_t failed = 0;
      for (std::size_t s = 0; s < outcomes.size(); ++s) {
        const auto& o = outcomes[s];
        json entry;
        entry["group_id"] = seeds[s].id;
        entry["seed_size"] = seeds[s].group.members.size();
        if (!o.ok()) {
          ++failed;
          entry["status"] = qualified_code(*o.error);
          entry["message"] = o.message;
          summary.push_back(entry);
          continue;
        }
        const auto& r = *o.result;
        grown.push_back({seeds[s].id, r.group});
        const auto& dir = *r.group.direction;
        json m;
        m["group_id"] = seeds[s].id;
        m["row"] = manifest.size();
        m["source_group_size"] = dir.source_group_size;
        m["source_identity_count"] = dir.source_identity_count;
        m["threshold"] = a->tau;
        m["provenance"] = std::string(to_string(seeds[s].group.provenance));
        manifest.push_back(m);
        dir_rows.insert(dir_rows.end(), dir.components.begin(), dir.components.end());

        json steps = json::array();
        for (const auto& st : r.trace.steps) {
          steps.push_back({{"image_id", ds.image_id(st.index)},
                           {"projection", st.projection},
                           {"identity_count", st.identity_count},
                           {"group_size", st.group_size}});
        }
        traces.push_back({{"group_id", seeds[s].id},
                          {"steps", steps},
                          {"stop_projection", optional_number(r.trace.stop_projection)}});

        entry["status"] = "ok";
        entry["final_size"] = r.group.members.size();
        entry["identity_count"] = dir.source_identity_count;
        entry["added"] = r.trace.steps.size();
        entry["stop_projection"] = optional_number(r.trace.stop_projection);
        summary.push_back(entry);
      }

      const fs::path dir = a->out;
      io::write_file(dir / "groups.csv", io::encode_groups(grown, ds));
      if (!grown.empty()) {
        io::write_file(dir / "directions.lfae",
                       io::encode_embeddings(dir_rows, grown.size(), static_cast<std::uint32_t>(ds.dim())));
      }
      json mdoc = prov.stamp("lfa-run");
      mdoc["directions"] = manifest;
      write_json(dir / "directions.json", mdoc);
      json tdoc = prov.stamp("lfa-run");
      tdoc["traces"] = traces;
      write_json(dir / "traces.json", tdoc);

      std::vector<Group> ok_groups = plain_groups(grown);
      json doc = prov.stamp("lfa-run");
      doc["seeds"] = seeds.size();
      doc["grown"] = grown.size();
      doc["failed"] = failed;
      doc["mean_size"] = grown.empty() ? json(nullptr) : json(mean_size(ok_groups));
      doc["groups"] = summary;
      write_json(dir / "lfa_report.json", doc);

      out_ << "tau " << format_double(a->tau) << ": grew " << summarize_sizes(ok_groups) << " from "
           << seeds.size() << " seeds";
      if (failed) out_ << " (" << failed << " seeds failed)";
      out_ << "\n";
      return kOk;
    });
  }

  static double mean_size(std::span<const Group> groups) {
    double total = 0.0;
    for (const auto& g : groups) total += static_cast<double>(g.members.size());
    return total / static_cast<double>(groups.size());
  }

  // -- baseline -------------------------------------------------------------
  void add_baseline(CLI::App& app) {
    auto* base = app.add_subcommand("baseline", "Comparison groupings");
    base->require_subcommand(1);

    auto* km = base->add_subcommand("kmeans", "Lloyd k-means with k-means++ seeding");
    struct KmArgs {
      DatasetArgs data;
      std::size_t k = 0;
      std::size_t target_n = 0;
      std::uint64_t seed = 0;
      std::size_t max_iter = 100;
      std::string out;
    };
    auto ka = std::make_shared<KmArgs>();
    ka->data.add_to(km);
    auto* k_opt = km->add_option("--k", ka->k, "Number of clusters");
    auto* n_opt = km->add_option("--target-n", ka->target_n, "Choose k = round(N / target-n)");
    k_opt->excludes(n_opt);
    km->add_option("--seed", ka->seed, "RNG seed")->required();
    km->add_option("--max-iter", ka->max_iter, "Iteration cap")->check(CLI::PositiveNumber);
    km->add_option("--out", ka->out, "Output directory")->required();
    bind(km, [this, ka](Provenance& prov) {
      const auto ds = ka->data.load(prov, err_);
      std::size_t k = ka->k;
      if (ka->target_n > 0) k = match_kmeans_k(ds.size(), ka->target_n);
      if (k == 0) throw Error(ErrorCode::InvalidK, "give --k or --target-n");
      KMeansOptions opt;
      opt.max_iterations = ka->max_iter;
      opt.threads = threads_;
      const auto res = kmeans(ds, k, ka->seed, opt);
      const auto groups = kmeans_groups(res);
      std::vector<io::NamedGroup> named;
      for (std::size_t g = 0; g < groups.size(); ++g) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "k%06zu", g);
        named.push_back({buf, groups[g]});
      }
      const fs::path dir = ka->out;
      io::write_file(dir / "kmeans_groups.csv", io::encode_groups(named, ds));
      json doc = prov.stamp("baseline kmeans");
      doc["k"] = k;
      doc["iterations_run"] = res.iterations_run;
      doc["inertia"] = res.inertia;
      doc["inertia_trace"] = res.inertia_trace;
      doc["non_empty_clusters"] = groups.size();
      json sizes = json::array();
      for (const auto& g : groups) sizes.push_back(g.members.size());
      doc["cluster_sizes"] = sizes;
      write_json(dir / "kmeans_report.json", doc);
      out_ << "k=" << k << ": " << res.iterations_run << " iterations, inertia " << format_double(res.inertia) << ", "
           << summarize_sizes(groups) << "\n";
      return kOk;
    });

    auto* nn = base->add_subcommand("nns", "Nearest-neighbour groups of fixed size");
    struct NnArgs {
      DatasetArgs data;
      std::size_t n = 0;
      std::string seeds;
      std::vector<std::string> seed_ids;
      SeedSelection select;
      std::string out;
    };
    auto na = std::make_shared<NnArgs>();
    na->data.add_to(nn);
    nn->add_option("--n", na->n, "Group size")->required()->check(CLI::PositiveNumber);
    auto* s_opt = nn->add_option("--seeds", na->seeds, "Seed group CSV; each group's first member seeds one NNS group");
    auto* i_opt = nn->add_option("--seed-ids", na->seed_ids, "Seed image ids")->delimiter(',');
    s_opt->excludes(i_opt);
    na->select.add_to(nn);
    nn->add_option("--out", na->out, "Output directory")->required();
    bind(nn, [this, na](Provenance& prov) {
      const auto ds = na->data.load(prov, err_);
      std::vector<std::size_t> seed_rows;
      std::vector<std::string> names;
      if (!na->seeds.empty()) {
        const auto seeds = na->select.apply(io::read_groups(na->seeds, ds));
        prov.add_input(na->seeds);
        for (const auto& g : seeds) {
          seed_rows.push_back(g.group.members.front());
          names.push_back(g.id);
        }
      } else {
        for (const auto& id : na->seed_ids) {
          auto r = ds.find(id);
          if (!r) throw Error(ErrorCode::InvalidArgument, "unknown seed image '" + id + "'");
          seed_rows.push_back(*r);
          names.push_back(id);
        }
      }
      if (seed_rows.empty()) throw Error(ErrorCode::InvalidArgument, "no NNS seeds (give --seeds or --seed-ids)");
      const auto groups = nns_groups(ds, seed_rows, na->n, threads_);
      std::vector<io::NamedGroup> named;
      for (std::size_t g = 0; g < groups.size(); ++g) named.push_back({names[g], groups[g]});
      const fs::path dir = na->out;
      io::write_file(dir / "nns_groups.csv", io::encode_groups(named, ds));
      json doc = prov.stamp("baseline nns");
      doc["n"] = na->n;
      doc["groups"] = groups.size();
      write_json(dir / "nns_report.json", doc);
      out_ << "nns n=" << na->n << ": " << summarize_sizes(groups) << "\n";
      return kOk;
    });
  }

  // -- coherence ------------------------------------------------------------
  void add_coherence(CLI::App& app) {
    auto* cmd = app.add_subcommand("coherence", "Mean attribute distance inside groups");
    struct Args {
      DatasetArgs data;
      std::string attributes;
      std::vector<std::string> groups;
      std::vector<std::string> labels;
      std::string out;
    };
    auto a = std::make_shared<Args>();
    a->data.add_to(cmd);
    cmd->add_option("--attributes", a->attributes, "Attribute CSV")->required();
    cmd->add_option("--groups", a->groups, "Group CSV, one per method (repeatable)")->required();
    cmd->add_option("--label", a->labels, "Method label per --groups file (default: file stem)");
    cmd->add_option("--out", a->out, "Report path (JSON)")->required();
    bind(cmd, [this, a](Provenance& prov) {
      const auto ds = a->data.load(prov, err_);
      const auto attrs = io::read_attributes(a->attributes);
      prov.add_input(a->attributes);
      if (!a->labels.empty() && a->labels.size() != a->groups.size()) {
        throw Error(ErrorCode::InvalidArgument, "give one --label per --groups file");
      }
      json methods = json::array();
      for (std::size_t m = 0; m < a->groups.size(); ++m) {
        const auto named = io::read_groups(a->groups[m], ds);
        prov.add_input(a->groups[m]);
        const std::string label = a->labels.empty() ? fs::path(a->groups[m]).stem().string() : a->labels[m];
        json per_group = json::array();
        CoherenceTotals pooled;
        std::size_t eligible = 0;
        for (const auto& g : named) {
          const auto t = coherence_totals(ds, g.group, attrs);
          json e{{"group_id", g.id}, {"size", g.group.members.size()}, {"pairs", t.pairs}};
          e["coherence"] = t.pairs ? json(t.distance_sum / static_cast<double>(t.pairs)) : json(nullptr);
          per_group.push_back(e);
          pooled.distance_sum += t.distance_sum;
          pooled.pairs += t.pairs;
          eligible += t.pairs > 0;
        }
        json entry;
        entry["label"] = label;
        entry["groups"] = named.size();
        entry["eligible_groups"] = eligible;
        entry["pairs"] = pooled.pairs;
        entry["mean_group_size"] = named.empty() ? json(nullptr) : json(mean_size(plain_groups(named)));
        entry["method_coherence"] =
            pooled.pairs ? json(pooled.distance_sum / static_cast<double>(pooled.pairs)) : json(nullptr);
        entry["per_group"] = per_group;
        methods.push_back(entry);
        out_ << label << ": ";
        if (pooled.pairs) {
          out_ << "coherence " << format_double(pooled.distance_sum / static_cast<double>(pooled.pairs)) << " over "
               << eligible << " groups (" << pooled.pairs << " pairs)\n";
        } else {
          out_ << "no eligible groups\n";
        }
      }
      json doc = prov.stamp("coherence");
      doc["pooling"] = "pair-pooled: total pairwise attribute distance / total pair count";
      doc["unknown_handling"] = "attribute skipped when either side is unknown";
      doc["methods"] = methods;
      write_json(a->out, doc);
      return kOk;
    });
  }

  // -- bias-report ----------------------------------------------------------
  void add_bias_report(CLI::App& app) {
    auto* cmd = app.add_subcommand("bias-report", "Verification error rates inside each group");
    struct Args {
      DatasetArgs data;
      std::string groups;
      std::vector<std::string> group_ids;
      std::size_t random_group = 0;
      std::uint64_t seed = 0;
      double fixed_threshold = 0.2;
      std::vector<double> fmr_targets{0.01, 0.001};
      std::size_t bootstrap = 1000;
      std::string ci = "normal";
      std::vector<std::string> compare;
      double curve_min = -0.2;
      double curve_max = 1.0;
      std::size_t curve_points = 61;
      std::string out;
    };
    auto a = std::make_shared<Args>();
    a->data.add_to(cmd);
    cmd->add_option("--groups", a->groups, "Group CSV")->required();
    cmd->add_option("--group-ids", a->group_ids, "Evaluate only these groups, in this order")->delimiter(',');
    cmd->add_option("--random-group", a->random_group, "Add a uniformly sampled group 'R' of this size (0 = none)");
    cmd->add_option("--seed", a->seed, "RNG seed (bootstrap and random group)")->required();
    cmd->add_option("--fixed-threshold", a->fixed_threshold, "Threshold for FMR@t")->check(CLI::Range(-1.0, 1.0));
    cmd->add_option("--fmr-targets", a->fmr_targets, "FMR operating points for FNMR@FMR")->delimiter(',');
    cmd->add_option("--bootstrap", a->bootstrap, "Bootstrap iterations (0 disables)");
    cmd->add_option("--ci", a->ci, "Interval method")->check(CLI::IsMember({"normal", "percentile"}));
    cmd->add_option("--compare", a->compare, "Groups used for cross-group sigma (default: all but R)")->delimiter(',');
    cmd->add_option("--curve-min", a->curve_min, "FMR curve lower threshold");
    cmd->add_option("--curve-max", a->curve_max, "FMR curve upper threshold");
    cmd->add_option("--curve-points", a->curve_points, "FMR curve sample count")->check(CLI::PositiveNumber);
    cmd->add_option("--out", a->out, "Output directory")->required();
    bind(cmd, [this, a](Provenance& prov) {
      if (a->bootstrap == 1) throw Error(ErrorCode::InvalidArgument, "--bootstrap needs 0 or at least 2 iterations");
      if (!(a->curve_min < a->curve_max) && a->curve_points > 1) {
        throw Error(ErrorCode::InvalidArgument, "--curve-min must be below --curve-max");
      }
      for (double t : a->fmr_targets) {
        if (!(t > 0.0 && t <= 1.0)) throw Error(ErrorCode::InvalidArgument, "FMR targets must lie in (0, 1]");
      }
      const auto ds = a->data.load(prov, err_);
      auto named = io::read_groups(a->groups, ds);
      prov.add_input(a->groups);
      if (!a->group_ids.empty()) {
        std::vector<io::NamedGroup> picked;
        for (const auto& id : a->group_ids) {
          auto it = std::find_if(named.begin(), named.end(), [&](const auto& g) { return g.id == id; });
          if (it == named.end()) throw Error(ErrorCode::InvalidArgument, "no group '" + id + "' in " + a->groups);
          picked.push_back(*it);
        }
        named = std::move(picked);
      }
      std::vector<std::string> names;
      std::vector<Group> groups;
      std::vector<std::size_t> compare;
      if (a->random_group > 0) {
        if (a->random_group > ds.size()) throw Error(ErrorCode::InvalidN, "--random-group exceeds dataset size");
        Rng rng = Rng::stream(a->seed, 0);
        std::vector<std::size_t> all(ds.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        rng.shuffle(all);
        all.resize(a->random_group);
        std::sort(all.begin(), all.end());
        Group r;
        r.members = std::move(all);
        names.push_back("R");
        groups.push_back(std::move(r));
      }
      for (const auto& g : named) {
        names.push_back(g.id);
        groups.push_back(g.group);
      }
      if (a->compare.empty()) {
        for (std::size_t g = a->random_group > 0 ? 1 : 0; g < groups.size(); ++g) compare.push_back(g);
      } else {
        for (const auto& id : a->compare) {
          auto it = std::find(names.begin(), names.end(), id);
          if (it == names.end()) throw Error(ErrorCode::InvalidArgument, "--compare names unknown group '" + id + "'");
          compare.push_back(static_cast<std::size_t>(it - names.begin()));
        }
      }

      BiasOptions opt;
      opt.fixed_threshold = a->fixed_threshold;
      opt.fmr_targets = a->fmr_targets;
      opt.bootstrap_iterations = a->bootstrap;
      opt.bootstrap_seed = a->seed;
      opt.ci_method = a->ci == "percentile" ? CiMethod::percentile : CiMethod::normal;
      opt.curve_thresholds = threshold_grid(a->curve_min, a->curve_max, a->curve_points);
      opt.threads = threads_;
      const auto rep = bias_report(ds, groups, names, compare, opt);
      write_bias_outputs(a->out, rep, prov);
      return kOk;
    });
  }

  void write_bias_outputs(const fs::path& dir, const BiasReport& rep, const Provenance& prov) {
    const auto& opt = rep.options;
    json groups = json::array();
    for (const auto& g : rep.groups) {
      json e;
      e["group_id"] = g.name;
      e["n_images"] = g.n_images;
      e["n_identities"] = g.n_identities;
      e["n_genuine"] = g.n_genuine;
      e["n_impostor"] = g.n_impostor;
      e["eer"] = optional_number(g.eer);
      json fnmr = json::array();
      for (std::size_t k = 0; k < opt.fmr_targets.size(); ++k) {
        fnmr.push_back({{"fmr", opt.fmr_targets[k]}, {"fnmr", optional_number(g.fnmr_at_targets[k])}});
      }
      e["fnmr_at_fmr"] = fnmr;
      e["fmr_at_threshold"] = optional_number(g.fmr_fixed);
      if (g.fmr_ci) {
        e["fmr_bootstrap"] = {{"mean", g.fmr_ci->mean},
                              {"halfwidth", g.fmr_ci->halfwidth},
                              {"lower", g.fmr_ci->lower},
                              {"upper", g.fmr_ci->upper},
                              {"valid_iterations", g.fmr_ci->valid_iterations},
                              {"degenerate_iterations", g.fmr_ci->degenerate_iterations}};
      } else {
        e["fmr_bootstrap"] = nullptr;
      }
      e["impostor_mean"] = optional_number(g.impostor_mean);
      e["notes"] = g.notes;
      groups.push_back(e);
    }
    json doc = prov.stamp("bias-report");
    doc["fixed_threshold"] = opt.fixed_threshold;
    doc["bootstrap_iterations"] = opt.bootstrap_iterations;
    doc["ci_method"] = opt.ci_method == CiMethod::normal ? "normal: mean +/- 1.96 * bootstrap std"
                                                          : "percentile: 2.5/97.5 bootstrap percentiles";
    doc["eer_convention"] = "midpoint at the score threshold minimising |FMR - FNMR|, lowest threshold on ties";
    doc["groups"] = groups;
    json sigma;
    json cmp = json::array();
    for (std::size_t g : rep.comparison) cmp.push_back(rep.groups[g].name);
    sigma["groups"] = cmp;
    sigma["eer"] = optional_number(rep.sigma_eer);
    json sf = json::array();
    for (std::size_t k = 0; k < opt.fmr_targets.size(); ++k) {
      sf.push_back({{"fmr", opt.fmr_targets[k]}, {"fnmr_sigma", optional_number(rep.sigma_fnmr_at_targets[k])}});
    }
    sigma["fnmr_at_fmr"] = sf;
    sigma["fmr_at_threshold"] = optional_number(rep.sigma_fmr_fixed);
    doc["sigma"] = sigma;
    write_json(dir / "bias_report.json", doc);

    auto num = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    std::vector<std::string> header{"group_id", "n_images", "n_identities", "n_genuine", "n_impostor", "eer"};
    for (double t : opt.fmr_targets) header.push_back("fnmr_at_fmr_" + format_double(t));
    header.push_back("fmr_at_" + format_double(opt.fixed_threshold));
    header.push_back("fmr_ci_mean");
    header.push_back("fmr_ci_halfwidth");
    header.push_back("impostor_mean");
    std::string csv = io::csv_line(header);
    for (const auto& g : rep.groups) {
      std::vector<std::string> f{g.name, std::to_string(g.n_images), std::to_string(g.n_identities),
                                 std::to_string(g.n_genuine), std::to_string(g.n_impostor), num(g.eer)};
      for (const auto& v : g.fnmr_at_targets) f.push_back(num(v));
      f.push_back(num(g.fmr_fixed));
      f.push_back(g.fmr_ci ? format_double(g.fmr_ci->mean) : "");
      f.push_back(g.fmr_ci ? format_double(g.fmr_ci->halfwidth) : "");
      f.push_back(num(g.impostor_mean));
      csv += io::csv_line(f);
    }
    io::write_file(dir / "bias_report.csv", csv);

    std::vector<std::string> ch{"threshold"};
    for (const auto& g : rep.groups) ch.push_back(g.name);
    std::string curve = io::csv_line(ch);
    for (std::size_t i = 0; i < opt.curve_thresholds.size(); ++i) {
      std::vector<std::string> f{format_double(opt.curve_thresholds[i])};
      for (const auto& g : rep.groups) f.push_back(g.fmr_curve.empty() ? "" : format_double(g.fmr_curve[i].rate));
      curve += io::csv_line(f);
    }
    io::write_file(dir / "fmr_curve.csv", curve);

    for (const auto& g : rep.groups) {
      out_ << g.name << " (" << g.n_images << " images / " << g.n_impostor << " impostor pairs): FMR@"
           << format_double(opt.fixed_threshold) << " = ";
      if (g.fmr_fixed) {
        out_ << format_double(*g.fmr_fixed);
        if (g.fmr_ci) out_ << " +/- " << format_double(g.fmr_ci->halfwidth);
      } else {
        out_ << "n/a";
      }
      out_ << ", EER = " << (g.eer ? format_double(*g.eer) : std::string("n/a")) << "\n";
    }
  }

  // -- consensus ------------------------------------------------------------
  void add_consensus(CLI::App& app) {
    auto* cmd = app.add_subcommand("consensus", "Majority-vote merge of annotator labels");
    struct Args {
      std::vector<std::string> annotators;
      bool intersect = false;
      std::string out;
    };
    auto a = std::make_shared<Args>();
    cmd->add_option("--annotator", a->annotators, "Annotator JSON file (repeatable, >= 2)")->required();
    cmd->add_flag("--intersect", a->intersect, "Keep only images every annotator labelled");
    cmd->add_option("--out", a->out, "Output directory")->required();
    bind(cmd, [this, a](Provenance& prov) {
      const auto schema = face_attribute_schema();
      std::vector<AttributeTable> tables;
      for (const auto& path : a->annotators) {
        tables.push_back(io::parse_annotator_json(io::read_file(path), schema, path));
        prov.add_input(path);
      }
      const auto table = consensus_table(tables, a->intersect);
      if (table.dropped_images > 0) {
        err_ << "warning: dropped " << table.dropped_images << " images not labelled by every annotator\n";
      }

      std::vector<std::string> header{"image_id"};
      for (const auto& s : table.schema) header.push_back(s.name);
      for (const auto& s : table.schema) header.push_back("agreement_" + s.name);
      std::string csv = io::csv_line(header);
      for (std::size_t i = 0; i < table.image_ids.size(); ++i) {
        std::vector<std::string> f{table.image_ids[i]};
        for (std::size_t k = 0; k < table.schema.size(); ++k) f.push_back(table.label(i, k));
        for (std::size_t k = 0; k < table.schema.size(); ++k) {
          const auto& ag = table.cell(i, k).agreement;
          f.push_back(ag ? format_double(*ag) : "");
        }
        csv += io::csv_line(f);
      }
      const fs::path dir = a->out;
      io::write_file(dir / "consensus.csv", csv);

      json attrs = json::array();
      for (const auto& st : table.stats) {
        json classes = json::array();
        for (const auto& c : st.classes) {
          classes.push_back({{"class", c.label},
                             {"count", c.count},
                             {"percentage", c.percentage},
                             {"mean_agreement", optional_number(c.mean_agreement)},
                             {"std_agreement", optional_number(c.std_agreement)}});
        }
        attrs.push_back({{"attribute", st.attribute},
                         {"classes", classes},
                         {"unknown", {{"count", st.unknown_count}, {"percentage", st.unknown_percentage}}}});
      }
      json doc = prov.stamp("consensus");
      doc["annotators"] = table.annotator_count;
      doc["images"] = table.image_ids.size();
      doc["dropped_images"] = table.dropped_images;
      doc["agreement_definition"] = "votes for the consensus label / number of annotators";
      doc["attributes"] = attrs;
      write_json(dir / "consensus_stats.json", doc);
      out_ << "merged " << table.annotator_count << " annotators over " << table.image_ids.size() << " images\n";
      return kOk;
    });
  }

  // -- traverse -------------------------------------------------------------
  void add_traverse(CLI::App& app) {
    auto* cmd = app.add_subcommand("traverse", "Slerp embeddings along a group direction");
    struct Args {
      DatasetArgs data;
      std::string directions;
      std::string manifest;
      std::string group_id;
      std::vector<std::string> target_ids;
      std::string groups;
      std::string target_group;
      std::vector<double> strengths;
      std::string out;
    };
    auto a = std::make_shared<Args>();
    a->data.add_to(cmd);
    cmd->add_option("--directions", a->directions, "Direction file written by lfa-run")->required();
    cmd->add_option("--manifest", a->manifest, "Direction manifest (default: directions.json beside --directions)");
    cmd->add_option("--group-id", a->group_id, "Group whose direction is traversed")->required();
    cmd->add_option("--target-ids", a->target_ids, "Image ids to traverse")->delimiter(',');
    cmd->add_option("--groups", a->groups, "Group CSV supplying --target-group");
    cmd->add_option("--target-group", a->target_group, "Traverse every member of this group");
    cmd->add_option("--strengths", a->strengths, "Interpolation strengths, e.g. --strengths=-0.5,0.45")
        ->required()
        ->delimiter(',');
    cmd->add_option("--out", a->out, "Output directory")->required();
    bind(cmd, [this, a](Provenance& prov) {
      const auto ds = a->data.load(prov, err_);
      const fs::path manifest_path =
          a->manifest.empty() ? fs::path(a->directions).parent_path() / "directions.json" : fs::path(a->manifest);
      const auto raw = io::read_embeddings(a->directions);
      prov.add_input(a->directions);
      json manifest;
      try {
        manifest = json::parse(io::read_file(manifest_path));
      } catch (const json::exception& e) {
        throw Error(ErrorCode::FormatError, manifest_path.string() + ": " + e.what());
      }
      prov.add_input(manifest_path);
      if (raw.dim != ds.dim()) throw Error(ErrorCode::FormatError, "direction dimension does not match the dataset");

      std::optional<std::size_t> row;
      for (const auto& m : manifest.value("directions", json::array())) {
        if (m.value("group_id", "") == a->group_id) row = m.at("row").get<std::size_t>();
      }
      if (!row || *row >= raw.rows) throw Error(ErrorCode::InvalidArgument, "no direction for group '" + a->group_id + "'");
      LatentDirection dir;
      dir.components.assign(raw.values.begin() + static_cast<std::ptrdiff_t>(*row * raw.dim),
                            raw.values.begin() + static_cast<std::ptrdiff_t>((*row + 1) * raw.dim));

      std::vector<std::size_t> targets;
      for (const auto& id : a->target_ids) {
        auto r = ds.find(id);
        if (!r) throw Error(ErrorCode::InvalidArgument, "unknown target image '" + id + "'");
        targets.push_back(*r);
      }
      if (!a->target_group.empty()) {
        if (a->groups.empty()) throw Error(ErrorCode::InvalidArgument, "--target-group needs --groups");
        const auto named = io::read_groups(a->groups, ds);
        prov.add_input(a->groups);
        auto it = std::find_if(named.begin(), named.end(), [&](const auto& g) { return g.id == a->target_group; });
        if (it == named.end()) throw Error(ErrorCode::InvalidArgument, "no group '" + a->target_group + "'");
        targets.insert(targets.end(), it->group.members.begin(), it->group.members.end());
      }
      if (targets.empty()) throw Error(ErrorCode::InvalidArgument, "no targets (give --target-ids or --target-group)");

      const auto cells = traverse_group(ds, targets, dir, a->strengths, threads_);
      std::vector<double> rows;
      std::vector<std::string> ids;
      std::vector<std::string> keys;
      json entries = json::array();
      std::size_t failed = 0;
      for (const auto& c : cells) {
        json e{{"target", ds.image_id(c.target)}, {"strength", c.strength}, {"direction_group", a->group_id}};
        if (c.embedding) {
          e["row"] = ids.size();
          ids.push_back(ds.image_id(c.target) + "@" + format_double(c.strength));
          keys.push_back(ds.identity_name(ds.identity(c.target)));
          rows.insert(rows.end(), c.embedding->begin(), c.embedding->end());
        } else {
          ++failed;
          e["error"] = c.error;
        }
        entries.push_back(e);
      }
      const fs::path out = a->out;
      if (!ids.empty()) {
        const auto traversed = EmbeddingDataset::from_rows(ids, rows, ds.dim(), keys);
        io::save_dataset(traversed, out / "embeddings.lfae", out / "ids.csv");
      }
      json doc = prov.stamp("traverse");
      doc["cells"] = entries;
      write_json(out / "manifest.json", doc);
      out_ << "traversed " << targets.size() << " targets x " << a->strengths.size() << " strengths";
      if (failed) out_ << " (" << failed << " failed)";
      out_ << "\n";
      return kOk;
    });
  }

  // -- match-size -----------------------------------------------------------
  void add_match_size(CLI::App& app) {
    auto* cmd = app.add_subcommand("match-size", "Find k or tau giving a target mean group size");
    struct Args {
      DatasetArgs data;
      std::string mode = "kmeans";
      std::size_t target_n = 0;
      std::string seeds;
      SeedSelection select;
      std::string out;
    };
    auto a = std::make_shared<Args>();
    a->data.add_to(cmd);
    cmd->add_option("--mode", a->mode, "kmeans or lfa")->check(CLI::IsMember({"kmeans", "lfa"}));
    cmd->add_option("--target-n", a->target_n, "Target mean group size")->required()->check(CLI::PositiveNumber);
    cmd->add_option("--seeds", a->seeds, "Seed group CSV (lfa mode)");
    a->select.add_to(cmd);
    cmd->add_option("--out", a->out, "Report path (JSON)")->required();
    bind(cmd, [this, a](Provenance& prov) {
      const auto ds = a->data.load(prov, err_);
      MatchResult r;
      if (a->mode == "kmeans") {
        r = match_group_size(ds, a->target_n, MatchMode::kmeans);
      } else {
        if (a->seeds.empty()) throw Error(ErrorCode::InvalidArgument, "lfa mode needs --seeds");
        const auto seeds = plain_groups(a->select.apply(io::read_groups(a->seeds, ds)));
        prov.add_input(a->seeds);
        r = match_lfa_threshold(ds, a->target_n, seeds, threads_);
      }
      json doc = prov.stamp("match-size");
      doc["mode"] = a->mode;
      doc["target_n"] = a->target_n;
      doc["parameter"] = r.parameter;
      doc["achieved_mean"] = r.achieved_mean;
      doc["within_tolerance"] = r.within_tolerance;
      doc["probes"] = r.probes;
      write_json(a->out, doc);
      out_ << (a->mode == "kmeans" ? "k = " : "tau = ") << format_double(r.parameter) << " (mean size "
           << format_double(r.achieved_mean) << ", target " << a->target_n << ")\n";
      if (!r.within_tolerance) {
        throw Error(ErrorCode::Unachievable, "no tau within 10% of the target after " + std::to_string(r.probes) +
                                                 " probes; closest reported above");
      }
      return kOk;
    });
  }

  std::ostream& out_;
  std::ostream& err_;
  std::size_t threads_ = 1;
  std::string config_path_;
  std::function<int()> action_ = [] { return int{kOk}; };
};

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Program p(out, err);
  return p.run(argc, argv);
}

/// Convenience for tests and scripts: argv[0] is supplied.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<const char*> argv{kToolName};
  for (const auto& s : args) argv.push_back(s.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace lfa::cli
