// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#include "gradcomp/config.h"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

namespace gradcomp {

namespace {

using nlohmann::json;

[[noreturn]] void Fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::kConfig, (path.empty() ? std::string("config") : path) + ": " + what);
}

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) Fail(path_, "expected an object");
  }

  // Call after all reads: anything unread is a typo.
  void Finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) Fail(Sub(it.key()), "unknown field");
    }
  }

  const json* Get(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string Sub(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void Double(const std::string& key, double& out) {
    if (const json* v = Get(key)) {
      if (!v->is_number()) Fail(Sub(key), "expected a number");
      out = v->get<double>();
    }
  }

  template <typename T>
  void Unsigned(const std::string& key, T& out) {
    if (const json* v = Get(key)) {
      if (!v->is_number_unsigned()) Fail(Sub(key), "expected a nonnegative integer");
      const std::uint64_t raw = v->get<std::uint64_t>();
      if (raw > std::numeric_limits<T>::max()) Fail(Sub(key), "value too large");
      out = static_cast<T>(raw);
    }
  }

  void Int(const std::string& key, int& out) {
    if (const json* v = Get(key)) {
      if (!v->is_number_integer()) Fail(Sub(key), "expected an integer");
      out = v->get<int>();
    }
  }

  void Bool(const std::string& key, bool& out) {
    if (const json* v = Get(key)) {
      if (!v->is_boolean()) Fail(Sub(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  bool String(const std::string& key, std::string& out) {
    if (const json* v = Get(key)) {
      if (!v->is_string()) Fail(Sub(key), "expected a string");
      out = v->get<std::string>();
      return true;
    }
    return false;
  }

  template <typename T>
  void UnsignedList(const std::string& key, std::vector<T>& out) {
    if (const json* v = Get(key)) {
      if (!v->is_array()) Fail(Sub(key), "expected an array");
      out.clear();
      for (const json& e : *v) {
        if (!e.is_number_unsigned()) Fail(Sub(key), "expected nonnegative integers");
        out.push_back(e.get<T>());
      }
    }
  }

  void DoubleList(const std::string& key, std::vector<double>& out) {
    if (const json* v = Get(key)) {
      if (!v->is_array()) Fail(Sub(key), "expected an array");
      out.clear();
      for (const json& e : *v) {
        if (!e.is_number()) Fail(Sub(key), "expected numbers");
        out.push_back(e.get<double>());
      }
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Wraps parse errors of enum names as config errors at `path`.
template <typename Fn>
auto Named(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    Fail(path, e.detail());
  }
}

CompressorKind ReadCompressor(const json& j, const std::string& path) {
  Reader r(j, path);
  CompressorKind k;
  std::string name = "none";
  r.String("kind", name);
  k.tag = Named(r.Sub("kind"), [&] { return ParseCompressorTag(name); });
  r.Unsigned("k", k.k_count);
  r.Double("k_fraction", k.k_fraction);
  r.Int("bits", k.bits);
  std::string precision;
  if (r.String("precision", precision)) {
    if (precision == "f32") {
      k.precision = ValuePrecision::kF32;
    } else if (precision == "f16") {
      k.precision = ValuePrecision::kF16;
    } else {
      Fail(r.Sub("precision"), "expected f32 or f16");
    }
  }
  r.Finish();
  Named(path, [&] {
    k.Validate();
    return 0;
  });
  return k;
}

json WriteCompressor(const CompressorKind& k) {
  json j;
  j["kind"] = CompressorTagName(k.tag);
  if (IsSparse(k.tag)) {
    if (k.k_count != 0) {
      j["k"] = k.k_count;
    } else {
      j["k_fraction"] = k.k_fraction;
    }
    j["precision"] = k.precision == ValuePrecision::kF16 ? "f16" : "f32";
  }
  if (IsDither(k.tag)) j["bits"] = k.bits;
  return j;
}

void ReadSchedule(const json& j, const std::string& path, LrSchedule& lr) {
  Reader r(j, path);
  r.Double("base", lr.base);
  r.Unsigned("warmup_steps", lr.warmup_steps);
  std::string decay;
  if (r.String("decay", decay)) {
    if (decay == "constant") {
      lr.decay = LrDecay::kConstant;
    } else if (decay == "inverse_sqrt") {
      lr.decay = LrDecay::kInverseSqrt;
    } else {
      Fail(r.Sub("decay"), "expected constant or inverse_sqrt");
    }
  }
  r.DoubleList("values", lr.values);
  r.Finish();
}

json WriteSchedule(const LrSchedule& lr) {
  json j;
  j["base"] = lr.base;
  j["warmup_steps"] = lr.warmup_steps;
  j["decay"] = lr.decay == LrDecay::kConstant ? "constant" : "inverse_sqrt";
  j["values"] = lr.values;
  return j;
}

RunConfig ReadRun(const json& root) {
  RunConfig cfg;
  Reader r(root, "");
  if (const json* p = r.Get("problem")) {
    Reader pr(*p, "problem");
    std::string kind = ProblemKindName(cfg.problem.kind);
    pr.String("kind", kind);
    cfg.problem.kind = Named("problem.kind", [&] { return ParseProblemKind(kind); });
    pr.Unsigned("dim", cfg.problem.dim);
    pr.Double("condition", cfg.problem.condition);
    pr.Double("noise", cfg.problem.noise);
    pr.Unsigned("samples", cfg.problem.samples);
    pr.Double("l2", cfg.problem.l2);
    pr.Unsigned("hidden", cfg.problem.hidden);
    pr.UnsignedList("blocks", cfg.problem.blocks);
    pr.Double("init_scale", cfg.problem.init_scale);
    pr.Finish();
  }
  std::string opt;
  if (r.String("optimizer", opt)) {
    cfg.optimizer = Named("optimizer", [&] { return ParseOptimizerKind(opt); });
  }
  if (const json* l = r.Get("lans")) {
    Reader lr(*l, "lans");
    lr.Double("beta1", cfg.lans.beta1);
    lr.Double("beta2", cfg.lans.beta2);
    lr.Double("eps", cfg.lans.eps);
    lr.Double("weight_decay", cfg.lans.weight_decay);
    lr.Double("alpha_l", cfg.lans.alpha_l);
    lr.Double("alpha_u", cfg.lans.alpha_u);
    if (const json* s = lr.Get("lr")) ReadSchedule(*s, "lans.lr", cfg.lans.lr);
    lr.Finish();
  }
  if (const json* n = r.Get("nag")) {
    Reader nr(*n, "nag");
    nr.Double("momentum", cfg.nag.momentum);
    if (const json* s = nr.Get("lr")) ReadSchedule(*s, "nag.lr", cfg.nag.lr);
    nr.Finish();
  }
  if (const json* a = r.Get("aggregation")) {
    Reader ar(*a, "aggregation");
    AggregationConfig& agg = cfg.aggregation;
    if (const json* c = ar.Get("compressor")) {
      agg.compressor = ReadCompressor(*c, "aggregation.compressor");
    }
    std::string mode;
    const bool has_mode = ar.String("mode", mode);
    if (has_mode) {
      agg.mode = Named("aggregation.mode", [&] { return ParseAggregationMode(mode); });
    } else if (agg.compressor.tag != CompressorTag::kNone) {
      agg.mode = AggregationMode::kCompressed;
    }
    if (const json* ef = ar.Get("use_ef")) {
      if (!ef->is_boolean()) Fail("aggregation.use_ef", "expected true or false");
      const AggregationMode want =
          ef->get<bool>() ? AggregationMode::kCompressedEf : AggregationMode::kCompressed;
      if (has_mode && agg.mode != want) {
        Fail("aggregation.use_ef", "conflicts with aggregation.mode");
      }
      agg.mode = want;
    }
    ar.Unsigned("size_threshold_bytes", agg.size_threshold_bytes);
    ar.Unsigned("shard_count", agg.shard_count);
    ar.Unsigned("n_workers", agg.n_workers);
    std::string policy;
    if (ar.String("shard_policy", policy)) {
      if (policy == "modulo") {
        agg.shard_policy = ShardPolicy::kModulo;
      } else if (policy == "weighted") {
        agg.shard_policy = ShardPolicy::kWeighted;
      } else {
        Fail("aggregation.shard_policy", "expected modulo or weighted");
      }
    }
    ar.Unsigned("local_devices", agg.local_devices);
    ar.Finish();
  }
  r.Unsigned("batch", cfg.batch);
  r.Unsigned("steps", cfg.steps);
  r.Unsigned("seed", cfg.seed);
  std::string transport;
  if (r.String("transport", transport)) {
    cfg.transport = Named("transport", [&] { return ParseTransport(transport); });
  }
  r.Bool("record_timings", cfg.record_timings);
  r.Unsigned("threads", cfg.threads);
  r.Finish();
  try {
    cfg.Validate();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig) throw;
    Fail("", e.detail());
  }
  return cfg;
}

std::string TransportString(const TransportOptions& t) {
  if (t.kind == TransportKind::kInProcess) return "inproc";
  return "tcp:" + t.host + ":" + std::to_string(t.base_port);
}

json ParseText(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    Fail("", std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

RunConfig ParseRunConfig(const std::string& json_text) {
  return ReadRun(ParseText(json_text));
}

RunConfig LoadRunConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseRunConfig(ss.str());
}

std::string RunConfigToJson(const RunConfig& cfg) {
  json j;
  const ProblemConfig& p = cfg.problem;
  j["problem"] = {{"kind", ProblemKindName(p.kind)},
                  {"dim", p.dim},
                  {"condition", p.condition},
                  {"noise", p.noise},
                  {"samples", p.samples},
                  {"l2", p.l2},
                  {"hidden", p.hidden},
                  {"blocks", p.blocks},
                  {"init_scale", p.init_scale}};
  j["optimizer"] = OptimizerKindName(cfg.optimizer);
  j["lans"] = {{"beta1", cfg.lans.beta1},
               {"beta2", cfg.lans.beta2},
               {"eps", cfg.lans.eps},
               {"weight_decay", cfg.lans.weight_decay},
               {"alpha_l", cfg.lans.alpha_l},
               {"alpha_u", cfg.lans.alpha_u},
               {"lr", WriteSchedule(cfg.lans.lr)}};
  j["nag"] = {{"momentum", cfg.nag.momentum}, {"lr", WriteSchedule(cfg.nag.lr)}};
  const AggregationConfig& a = cfg.aggregation;
  j["aggregation"] = {
      {"mode", AggregationModeName(a.mode)},
      {"compressor", WriteCompressor(a.compressor)},
      {"size_threshold_bytes", a.size_threshold_bytes},
      {"shard_count", a.shard_count},
      {"n_workers", a.n_workers},
      {"shard_policy", a.shard_policy == ShardPolicy::kModulo ? "modulo" : "weighted"},
      {"local_devices", a.local_devices}};
  j["batch"] = cfg.batch;
  j["steps"] = cfg.steps;
  j["seed"] = cfg.seed;
  j["transport"] = TransportString(cfg.transport);
  j["record_timings"] = cfg.record_timings;
  j["threads"] = cfg.threads;
  return j.dump(2) + "\n";
}

CompressorKind ParseCompressorSpec(const std::string& json_text) {
  return ReadCompressor(ParseText(json_text), "compressor");
}

std::string CompressorKindToJson(const CompressorKind& kind) {
  return WriteCompressor(kind).dump();
}

}  // namespace gradcomp
