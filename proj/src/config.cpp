#include "batchlr/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include <json.hpp>

#include "batchlr/errors.hpp"

namespace batchlr {

namespace {

using json = nlohmann::json;

struct LineCol {
  std::size_t line = 1;
  std::size_t col = 1;
};

LineCol line_col(std::string_view text, std::size_t offset) {
  LineCol lc;
  offset = std::min(offset, text.size());
  for (std::size_t i = 0; i < offset; ++i) {
    if (text[i] == '\n') {
      ++lc.line;
      lc.col = 1;
    } else {
      ++lc.col;
    }
  }
  return lc;
}

std::vector<std::string> pointer_tokens(const std::string& pointer) {
  std::vector<std::string> out;
  std::size_t pos = 1;
  while (pos <= pointer.size() && !pointer.empty()) {
    const std::size_t next = pointer.find('/', pos);
    out.push_back(pointer.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

class Context {
 public:
  Context(std::string_view text, std::string source) : text_(text), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& pointer, const std::string& message) const {
    std::ostringstream os;
    os << source_;
    if (const std::size_t line = locate(pointer); line > 0) os << ":" << line;
    os << ": " << (pointer.empty() ? "/" : pointer) << ": " << message;
    throw ConfigError(os.str());
  }

  // Best effort: walk the quoted object keys of the pointer in document order.
  std::size_t locate(const std::string& pointer) const {
    std::size_t pos = 0;
    std::size_t found = std::string_view::npos;
    for (const auto& tok : pointer_tokens(pointer)) {
      if (!tok.empty() && std::all_of(tok.begin(), tok.end(), ::isdigit)) continue;
      const std::size_t at = text_.find("\"" + tok + "\"", pos);
      if (at == std::string_view::npos) break;
      found = at;
      pos = at + tok.size() + 2;
    }
    if (found == std::string_view::npos) return 0;
    return line_col(text_, found).line;
  }

  [[noreturn]] void fail_at(std::size_t offset, const std::string& message) const {
    const LineCol lc = line_col(text_, offset);
    throw ConfigError(source_ + ":" + std::to_string(lc.line) + ":" + std::to_string(lc.col) +
                      ": " + message);
  }

 private:
  std::string_view text_;
  std::string source_;
};

std::string join(const std::string& base, const std::string& key) { return base + "/" + key; }

void only_keys(const Context& ctx, const json& obj, const std::string& ptr,
               std::initializer_list<const char*> allowed) {
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!ok.contains(key)) ctx.fail(join(ptr, key), "unknown key");
  }
}

const json& object_at(const Context& ctx, const json& parent, const std::string& ptr,
                      const char* key) {
  const auto it = parent.find(key);
  if (it == parent.end()) ctx.fail(ptr, std::string("missing required key '") + key + "'");
  if (!it->is_object()) ctx.fail(join(ptr, key), "expected an object");
  return *it;
}

double number(const Context& ctx, const json& obj, const std::string& ptr, const char* key,
              std::optional<double> fallback = std::nullopt) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    if (fallback) return *fallback;
    ctx.fail(ptr, std::string("missing required key '") + key + "'");
  }
  if (!it->is_number()) ctx.fail(join(ptr, key), "expected a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) ctx.fail(join(ptr, key), "expected a finite number");
  return v;
}

std::uint64_t integer(const Context& ctx, const json& obj, const std::string& ptr,
                      const char* key, std::optional<std::uint64_t> fallback = std::nullopt) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    if (fallback) return *fallback;
    ctx.fail(ptr, std::string("missing required key '") + key + "'");
  }
  if (it->is_number_unsigned()) return it->get<std::uint64_t>();
  if (it->is_number_integer()) ctx.fail(join(ptr, key), "expected a nonnegative integer");
  if (it->is_number_float()) {
    const double v = it->get<double>();
    if (v >= 0.0 && v == std::floor(v) && v < 9.0e15) return static_cast<std::uint64_t>(v);
  }
  ctx.fail(join(ptr, key), "expected a nonnegative integer");
}

std::uint64_t positive(const Context& ctx, const json& obj, const std::string& ptr,
                       const char* key, std::optional<std::uint64_t> fallback = std::nullopt) {
  const std::uint64_t v = integer(ctx, obj, ptr, key, fallback);
  if (v < 1) ctx.fail(join(ptr, key), "must be at least 1");
  return v;
}

std::string string_at(const Context& ctx, const json& obj, const std::string& ptr,
                      const char* key, std::optional<std::string> fallback = std::nullopt) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    if (fallback) return *fallback;
    ctx.fail(ptr, std::string("missing required key '") + key + "'");
  }
  if (!it->is_string()) ctx.fail(join(ptr, key), "expected a string");
  return it->get<std::string>();
}

double eta_value(const Context& ctx, const json& o, const std::string& ptr) {
  if (o.contains("eta") && o.contains("eta_max")) ctx.fail(ptr, "give either 'eta' or 'eta_max'");
  return number(ctx, o, ptr, o.contains("eta") ? "eta" : "eta_max");
}

LrSchedule parse_lr(const Context& ctx, const json& o, const std::string& ptr) {
  const std::string name = string_at(ctx, o, ptr, "family");
  const auto family = parse_lr_family(name);
  if (!family) ctx.fail(join(ptr, "family"), "unknown learning-rate family '" + name + "'");
  switch (*family) {
    case LrFamily::Constant:
      only_keys(ctx, o, ptr, {"family", "eta", "eta_max"});
      return LrSchedule::constant(eta_value(ctx, o, ptr));
    case LrFamily::Diminishing:
      only_keys(ctx, o, ptr, {"family", "eta", "eta_max"});
      return LrSchedule::diminishing(eta_value(ctx, o, ptr));
    case LrFamily::Cosine:
      only_keys(ctx, o, ptr, {"family", "eta_min", "eta_max"});
      return LrSchedule::cosine(number(ctx, o, ptr, "eta_min", 0.0),
                                number(ctx, o, ptr, "eta_max"));
    case LrFamily::PolynomialDecay:
      only_keys(ctx, o, ptr, {"family", "eta_min", "eta_max", "p"});
      return LrSchedule::polynomial_decay(number(ctx, o, ptr, "eta_min", 0.0),
                                          number(ctx, o, ptr, "eta_max"),
                                          number(ctx, o, ptr, "p"));
    case LrFamily::ExponentialGrowth:
      only_keys(ctx, o, ptr, {"family", "eta0", "gamma"});
      return LrSchedule::exponential_growth(number(ctx, o, ptr, "eta0"),
                                            number(ctx, o, ptr, "gamma"));
    case LrFamily::PolynomialGrowth:
      only_keys(ctx, o, ptr, {"family", "eta0", "a2", "c2"});
      return LrSchedule::polynomial_growth(number(ctx, o, ptr, "eta0"), number(ctx, o, ptr, "a2"),
                                           number(ctx, o, ptr, "c2"));
    case LrFamily::WarmupConstant:
      only_keys(ctx, o, ptr, {"family", "eta0", "gamma", "warmup_increases"});
      return LrSchedule::warmup_constant(
          number(ctx, o, ptr, "eta0"), number(ctx, o, ptr, "gamma"),
          static_cast<int>(integer(ctx, o, ptr, "warmup_increases")));
    case LrFamily::WarmupCosine:
      only_keys(ctx, o, ptr, {"family", "eta0", "gamma", "warmup_increases", "eta_min"});
      return LrSchedule::warmup_cosine(
          number(ctx, o, ptr, "eta0"), number(ctx, o, ptr, "gamma"),
          static_cast<int>(integer(ctx, o, ptr, "warmup_increases")),
          number(ctx, o, ptr, "eta_min", 0.0));
  }
  ctx.fail(ptr, "unsupported learning-rate family");
}

BsSchedule parse_bs(const Context& ctx, const json& o, const std::string& ptr) {
  const std::string name = string_at(ctx, o, ptr, "family");
  const auto family = parse_bs_family(name);
  if (!family) ctx.fail(join(ptr, "family"), "unknown batch-size family '" + name + "'");
  switch (*family) {
    case BsFamily::Constant:
      only_keys(ctx, o, ptr, {"family", "b"});
      return BsSchedule::constant(positive(ctx, o, ptr, "b"));
    case BsFamily::DecayingControl:
      only_keys(ctx, o, ptr, {"family", "b"});
      return BsSchedule::decaying_control(positive(ctx, o, ptr, "b"));
    case BsFamily::ExponentialGrowth:
      only_keys(ctx, o, ptr, {"family", "b0", "delta"});
      return BsSchedule::exponential_growth(positive(ctx, o, ptr, "b0"),
                                            number(ctx, o, ptr, "delta"));
    case BsFamily::PolynomialGrowth:
      only_keys(ctx, o, ptr, {"family", "a", "b0", "c"});
      return BsSchedule::polynomial_growth(number(ctx, o, ptr, "a"), number(ctx, o, ptr, "b0"),
                                           number(ctx, o, ptr, "c"));
  }
  ctx.fail(ptr, "unsupported batch-size family");
}

PlanSpec parse_plan(const Context& ctx, const json& o, const std::string& ptr) {
  only_keys(ctx, o, ptr, {"name", "lr", "bs", "epochs_per_block", "blocks", "epochs"});
  PlanSpec spec;
  spec.pointer = ptr;
  spec.line = ctx.locate(ptr);
  spec.name = string_at(ctx, o, ptr, "name", std::string());
  spec.lr = parse_lr(ctx, object_at(ctx, o, ptr, "lr"), join(ptr, "lr"));
  spec.bs = parse_bs(ctx, object_at(ctx, o, ptr, "bs"), join(ptr, "bs"));
  if (const auto it = o.find("epochs_per_block"); it != o.end()) {
    if (o.contains("blocks") || o.contains("epochs")) {
      ctx.fail(ptr, "give either 'epochs_per_block' or 'blocks' and 'epochs'");
    }
    const std::string p = join(ptr, "epochs_per_block");
    if (!it->is_array() || it->empty()) ctx.fail(p, "expected a nonempty array of integers");
    for (std::size_t k = 0; k < it->size(); ++k) {
      const json& e = (*it)[k];
      if (!e.is_number_unsigned() || e.get<std::uint64_t>() < 1 ||
          e.get<std::uint64_t>() > 1'000'000'000ULL) {
        ctx.fail(join(p, std::to_string(k)), "expected a positive integer");
      }
      spec.epochs_per_block.push_back(static_cast<int>(e.get<std::uint64_t>()));
    }
  } else {
    const auto blocks = positive(ctx, o, ptr, "blocks");
    const auto epochs = positive(ctx, o, ptr, "epochs");
    if (blocks > 100'000 || epochs > 1'000'000'000ULL) ctx.fail(ptr, "block layout too large");
    spec.epochs_per_block.assign(blocks, static_cast<int>(epochs));
  }
  return spec;
}

ProblemSpec parse_problem(const Context& ctx, const json& o, const std::string& ptr) {
  only_keys(ctx, o, ptr, {"kind", "n", "d", "lambda", "amp", "seed", "spread", "offset"});
  ProblemSpec p;
  const std::string kind = string_at(ctx, o, ptr, "kind", std::string("quadratic"));
  const auto parsed = parse_problem_kind(kind);
  if (!parsed) ctx.fail(join(ptr, "kind"), "unknown problem kind '" + kind + "'");
  p.kind = *parsed;
  p.n = positive(ctx, o, ptr, "n", 64);
  p.d = positive(ctx, o, ptr, "d", 10);
  p.lambda = number(ctx, o, ptr, "lambda", 1.0);
  if (!(p.lambda > 0.0)) ctx.fail(join(ptr, "lambda"), "must be positive");
  p.amp = number(ctx, o, ptr, "amp", 0.0);
  if (p.amp < 0.0) ctx.fail(join(ptr, "amp"), "must be nonnegative");
  p.seed = integer(ctx, o, ptr, "seed", 0);
  p.spread = number(ctx, o, ptr, "spread", 1.0);
  p.offset = number(ctx, o, ptr, "offset", 0.0);
  return p;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, const std::string& source) {
  const Context ctx(text, source);
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const std::size_t offset = e.byte == 0 ? 0 : e.byte - 1;
    // Drop the "[json.exception...] parse error at line L, column C: " prefix.
    std::string what = e.what();
    if (const auto col = what.find("column"); col != std::string::npos) {
      if (const auto at = what.find(": ", col); at != std::string::npos) what = what.substr(at + 2);
    }
    ctx.fail_at(offset, what);
  }
  if (!doc.is_object()) ctx.fail("", "expected a JSON object at the top level");
  only_keys(ctx, doc, "",
            {"spec_version", "name", "problem", "plan", "sweep", "theta0", "seed", "seeds",
             "record_every", "measure", "slack_se", "enumerate"});

  ExperimentConfig cfg;
  cfg.source = source;
  cfg.spec_version = static_cast<int>(integer(ctx, doc, "", "spec_version"));
  if (cfg.spec_version != kConfigVersion) {
    ctx.fail("/spec_version", "unsupported version " + std::to_string(cfg.spec_version) +
                                  " (expected " + std::to_string(kConfigVersion) + ")");
  }
  cfg.name = string_at(ctx, doc, "", "name", std::string("experiment"));
  cfg.problem = doc.contains("problem")
                    ? parse_problem(ctx, object_at(ctx, doc, "", "problem"), "/problem")
                    : ProblemSpec{};
  cfg.plan = parse_plan(ctx, object_at(ctx, doc, "", "plan"), "/plan");
  if (cfg.plan.name.empty()) cfg.plan.name = cfg.name;

  if (const auto it = doc.find("sweep"); it != doc.end()) {
    if (!it->is_array() || it->empty()) ctx.fail("/sweep", "expected a nonempty array of plans");
    for (std::size_t k = 0; k < it->size(); ++k) {
      const std::string p = "/sweep/" + std::to_string(k);
      if (!(*it)[k].is_object()) ctx.fail(p, "expected an object");
      PlanSpec spec = parse_plan(ctx, (*it)[k], p);
      if (spec.name.empty()) spec.name = "variant" + std::to_string(k);
      cfg.sweep.push_back(std::move(spec));
    }
  }

  cfg.theta0.assign(cfg.problem.d, 0.0);
  if (const auto it = doc.find("theta0"); it != doc.end()) {
    if (it->is_number()) {
      cfg.theta0.assign(cfg.problem.d, number(ctx, doc, "", "theta0"));
    } else if (it->is_array()) {
      if (it->size() != cfg.problem.d) {
        ctx.fail("/theta0", "expected " + std::to_string(cfg.problem.d) + " components");
      }
      for (std::size_t j = 0; j < it->size(); ++j) {
        const json& v = (*it)[j];
        if (!v.is_number() || !std::isfinite(v.get<double>())) {
          ctx.fail("/theta0/" + std::to_string(j), "expected a finite number");
        }
        cfg.theta0[j] = v.get<double>();
      }
    } else {
      ctx.fail("/theta0", "expected a number or an array of numbers");
    }
  }

  if (doc.contains("seed")) cfg.seed = integer(ctx, doc, "", "seed");
  cfg.seeds = positive(ctx, doc, "", "seeds", 1);
  cfg.record_every = positive(ctx, doc, "", "record_every", 1);
  const std::string measure = string_at(ctx, doc, "", "measure", std::string("grad_norm2"));
  const auto m = parse_measure(measure);
  if (!m) ctx.fail("/measure", "expected 'grad_norm2' or 'subopt'");
  cfg.measure = *m;
  cfg.slack_se = number(ctx, doc, "", "slack_se", 2.0);
  if (cfg.slack_se < 0.0) ctx.fail("/slack_se", "must be nonnegative");

  if (const auto it = doc.find("enumerate"); it != doc.end()) {
    if (!it->is_object()) ctx.fail("/enumerate", "expected an object");
    only_keys(ctx, *it, "/enumerate", {"b", "limit"});
    if (const auto b = it->find("b"); b != it->end()) {
      if (!b->is_array() || b->empty()) ctx.fail("/enumerate/b", "expected a nonempty array");
      cfg.enumerate.batch_sizes.clear();
      for (std::size_t k = 0; k < b->size(); ++k) {
        const json& v = (*b)[k];
        if (!v.is_number_unsigned() || v.get<std::uint64_t>() < 1) {
          ctx.fail("/enumerate/b/" + std::to_string(k), "expected a positive integer");
        }
        cfg.enumerate.batch_sizes.push_back(v.get<std::size_t>());
      }
    }
    cfg.enumerate.limit = positive(ctx, *it, "/enumerate", "limit", kEnumerationLimit);
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

SchedulerPlan build_plan(const PlanSpec& spec, std::size_t n) {
  return make_plan(spec.lr, spec.bs, n, spec.epochs_per_block);
}

SchedulerPlan build_plan(const ExperimentConfig& cfg, const PlanSpec& spec) {
  try {
    return build_plan(spec, cfg.problem.n);
  } catch (const Error& e) {
    std::string where = cfg.source;
    if (spec.line > 0) where += ":" + std::to_string(spec.line);
    throw ConfigError(where + ": " + spec.pointer + ": " + e.what());
  }
}

}  // namespace batchlr
