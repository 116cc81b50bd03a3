#include <algorithm>
#include <cctype>
#include <charconv>
#include <functional>
#include <unordered_map>

#include "gnnforge/dsl.hpp"
#include "json.hpp"

namespace gnnforge::dsl {

namespace {

constexpr std::int64_t kMaxLoopTrips = 100'000'000;
constexpr std::int64_t kMaxBodyTrips = 1'000'000;

std::string lower_case(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

struct Event {
  enum class Kind { Forward, Backward, Optimizer };
  Kind kind;
  std::int64_t layer = 0;
  std::string model;
  std::string aggregator;
  OptimizerSpec optimizer;
  SourceLoc loc;
};

class Lowerer {
 public:
  Lowerer(const Function& fn, const Bindings& b) : fn_(fn), bindings_(b) {
    for (const Param& p : fn.params) params_[p.name] = &p;
  }

  TrainingPlan run() {
    TrainingPlan plan;
    plan.function = fn_.name;
    bool loaded = false, initialized = false;
    const Stmt* epoch_stmt = nullptr;

    for (const Stmt& s : fn_.body) {
      if (s.kind == Stmt::Kind::For) {
        if (epoch_stmt) throw DslError(ErrorKind::Structure, s.loc, "only one epoch loop is allowed");
        if (!loaded) throw DslError(ErrorKind::StatementOrder, s.loc, "gnn.load must precede the epoch loop");
        if (!initialized)
          throw DslError(ErrorKind::StatementOrder, s.loc, "gnn.initializeLayers must precede the epoch loop");
        epoch_stmt = &s;
        continue;
      }
      const Expr& call = s.call;
      const std::string method = check_method(call);
      if (method == "load") {
        check_arity(call, 2, 2);
        require_param(call.args[0], ParamType::Graph, "a Graph parameter");
        plan.dataset = eval_string(call.args[1]);
        loaded = true;
      } else if (method == "initializeLayers") {
        if (!loaded) throw DslError(ErrorKind::StatementOrder, s.loc, "gnn.load must precede gnn.initializeLayers");
        check_arity(call, 2, 2);
        require_param(call.args[0], ParamType::Container, "the layer-size container");
        const std::string scheme = lower_case(eval_string(call.args[1]));
        if (scheme != "xavier" && scheme != "xaviers")
          throw DslError(ErrorKind::BadArgument, call.args[1].loc,
                         "unknown init scheme '" + scheme + "' (valid: \"xavier\", \"xaviers\")");
        plan.init_scheme = "xavier";
        plan.layer_dims = neurons(call.args[0].loc);
        initialized = true;
      } else if (method == "getLayers") {
        check_arity(call, 0, 0);
      } else {
        throw DslError(ErrorKind::Structure, s.loc, "gnn." + method + " must appear inside the epoch loop");
      }
    }
    if (!loaded) throw DslError(ErrorKind::Structure, fn_.loc, "missing gnn.load");
    if (!initialized) throw DslError(ErrorKind::Structure, fn_.loc, "missing gnn.initializeLayers");
    if (!epoch_stmt) throw DslError(ErrorKind::MissingForward, fn_.loc, "missing epoch loop with gnn.forwardPass");

    const ForLoop& loop = *epoch_stmt->loop;
    std::int64_t trips = 0;
    iterate(loop, epoch_stmt->loc, kMaxLoopTrips, [&](std::int64_t) { ++trips; });
    plan.epochs = static_cast<std::size_t>(trips);

    // The per-epoch body is walked once; it must not depend on the epoch index.
    locals_[loop.var] = 0;
    std::vector<Event> events;
    walk(loop.body, events);
    locals_.erase(loop.var);

    validate(events, plan, epoch_stmt->loc);
    return plan;
  }

 private:
  const Function& fn_;
  const Bindings& bindings_;
  std::unordered_map<std::string, const Param*> params_;
  std::unordered_map<std::string, std::int64_t> locals_;

  const std::vector<std::size_t>& neurons(SourceLoc loc) const {
    if (bindings_.neurons.size() < 2)
      throw DslError(ErrorKind::UnboundIdentifier, loc,
                     "the layer-size container needs a binding with at least two entries");
    return bindings_.neurons;
  }

  std::int64_t layer_count(SourceLoc loc) const { return static_cast<std::int64_t>(neurons(loc).size()) - 1; }

  const Param* find_param(const std::string& name) const {
    auto it = params_.find(name);
    return it == params_.end() ? nullptr : it->second;
  }

  std::string check_method(const Expr& call) const {
    static const std::vector<std::string> kMethods = {"load",           "initializeLayers", "forwardPass",
                                                      "backPropagation", "optimizer",        "getLayers"};
    if (call.receiver.empty())
      throw DslError(ErrorKind::UnknownMethod, call.loc, "unknown function '" + call.text + "'");
    const Param* recv = find_param(call.receiver);
    if (!recv) throw DslError(ErrorKind::UnboundIdentifier, call.loc, "'" + call.receiver + "' is not declared");
    if (recv->type != ParamType::Gnn)
      throw DslError(ErrorKind::BadArgument, call.loc, "methods can only be called on the GNN parameter");
    if (std::find(kMethods.begin(), kMethods.end(), call.text) == kMethods.end())
      throw DslError(ErrorKind::UnknownMethod, call.loc,
                     "unknown method '" + call.text +
                         "' (valid: load, initializeLayers, forwardPass, backPropagation, optimizer, getLayers)");
    return call.text;
  }

  static void check_arity(const Expr& call, std::size_t lo, std::size_t hi) {
    if (call.args.size() < lo || call.args.size() > hi) {
      const std::string want = lo == hi ? std::to_string(lo) : std::to_string(lo) + " to " + std::to_string(hi);
      throw DslError(ErrorKind::WrongArity, call.loc,
                     call.text + " takes " + want + " argument(s), got " + std::to_string(call.args.size()));
    }
  }

  void require_param(const Expr& e, ParamType type, const std::string& what) const {
    if (e.kind != Expr::Kind::Ident) throw DslError(ErrorKind::BadArgument, e.loc, "expected " + what);
    const Param* p = find_param(e.text);
    if (!p) throw DslError(ErrorKind::UnboundIdentifier, e.loc, "'" + e.text + "' is not declared");
    if (p->type != type) throw DslError(ErrorKind::BadArgument, e.loc, "expected " + what);
  }

  std::string eval_string(const Expr& e) const {
    if (e.kind == Expr::Kind::String) return e.text;
    if (e.kind == Expr::Kind::Ident) {
      const Param* p = find_param(e.text);
      if (!p) throw DslError(ErrorKind::UnboundIdentifier, e.loc, "'" + e.text + "' is not declared");
      if (p->type != ParamType::String)
        throw DslError(ErrorKind::BadArgument, e.loc, "'" + e.text + "' is not a String");
      if (!bindings_.dataset)
        throw DslError(ErrorKind::UnboundIdentifier, e.loc, "no value bound for String parameter '" + e.text + "'");
      return *bindings_.dataset;
    }
    throw DslError(ErrorKind::BadArgument, e.loc, "expected a string");
  }

  std::int64_t eval_int(const Expr& e) const {
    switch (e.kind) {
      case Expr::Kind::Int: {
        std::int64_t v = 0;
        auto [p, ec] = std::from_chars(e.text.data(), e.text.data() + e.text.size(), v);
        if (ec != std::errc() || p != e.text.data() + e.text.size())
          throw DslError(ErrorKind::BadArgument, e.loc, "integer literal out of range: " + e.text);
        return v;
      }
      case Expr::Kind::Negate: return -eval_int(e.args[0]);
      case Expr::Kind::Binary: {
        const std::int64_t a = eval_int(e.args[0]);
        const std::int64_t b = eval_int(e.args[1]);
        return e.text == "+" ? a + b : a - b;
      }
      case Expr::Kind::Ident: {
        if (auto it = locals_.find(e.text); it != locals_.end()) return it->second;
        const Param* p = find_param(e.text);
        if (p && p->type == ParamType::Container) return layer_count(e.loc);
        if (p && p->type != ParamType::Int)
          throw DslError(ErrorKind::BadArgument, e.loc, "'" + e.text + "' is not an integer");
        if (auto it = bindings_.ints.find(e.text); it != bindings_.ints.end()) return it->second;
        throw DslError(ErrorKind::UnboundIdentifier, e.loc, "'" + e.text + "' has no value");
      }
      case Expr::Kind::Call: {
        const std::string method = check_method(e);
        if (method != "getLayers")
          throw DslError(ErrorKind::BadArgument, e.loc, "gnn." + method + " does not yield an integer");
        check_arity(e, 0, 0);
        return layer_count(e.loc);
      }
      case Expr::Kind::Float:
      case Expr::Kind::String: break;
    }
    throw DslError(ErrorKind::BadArgument, e.loc, "expected an integer expression");
  }

  double eval_number(const Expr& e) const {
    if (e.kind == Expr::Kind::Float) {
      double v = 0;
      auto [p, ec] = std::from_chars(e.text.data(), e.text.data() + e.text.size(), v);
      if (ec != std::errc() || p != e.text.data() + e.text.size())
        throw DslError(ErrorKind::BadArgument, e.loc, "bad number " + e.text);
      return v;
    }
    if (e.kind == Expr::Kind::Negate && e.args[0].kind == Expr::Kind::Float) return -eval_number(e.args[0]);
    return static_cast<double>(eval_int(e));
  }

  template <class F>
  void iterate(const ForLoop& loop, SourceLoc loc, std::int64_t cap, F&& body) {
    if (loop.cond_var != loop.var || loop.step_var != loop.var)
      throw DslError(ErrorKind::Structure, loc, "loop condition and step must use the loop variable '" + loop.var + "'");
    if (find_param(loop.var) || locals_.count(loop.var))
      throw DslError(ErrorKind::Structure, loc, "loop variable '" + loop.var + "' shadows another name");
    std::int64_t v = eval_int(loop.init);
    std::int64_t step = 1;
    if (loop.step_op == "--") step = -1;
    if (loop.step_amount) step = eval_int(*loop.step_amount) * (loop.step_op == "-=" ? -1 : 1);
    std::int64_t trips = 0;
    auto holds = [&](std::int64_t x) {
      locals_[loop.var] = x;
      const std::int64_t b = eval_int(loop.bound);
      const std::string& op = loop.cond_op;
      if (op == "<") return x < b;
      if (op == "<=") return x <= b;
      if (op == ">") return x > b;
      if (op == ">=") return x >= b;
      return x != b;
    };
    while (holds(v)) {
      if (++trips > cap)
        throw DslError(ErrorKind::Structure, loc, "loop over '" + loop.var + "' does not terminate");
      locals_[loop.var] = v;
      body(v);
      v += step;
    }
    locals_.erase(loop.var);
  }

  void walk(const std::vector<Stmt>& body, std::vector<Event>& out) {
    for (const Stmt& s : body) {
      if (s.kind == Stmt::Kind::For) {
        const ForLoop& loop = *s.loop;
        iterate(loop, s.loc, kMaxBodyTrips, [&](std::int64_t) { walk(loop.body, out); });
        continue;
      }
      const Expr& call = s.call;
      const std::string method = check_method(call);
      Event ev;
      ev.loc = s.loc;
      if (method == "forwardPass") {
        check_arity(call, 3, 3);
        ev.kind = Event::Kind::Forward;
        ev.layer = eval_int(call.args[0]);
        ev.model = eval_string(call.args[1]);
        ev.aggregator = eval_string(call.args[2]);
      } else if (method == "backPropagation") {
        check_arity(call, 1, 1);
        ev.kind = Event::Kind::Backward;
        ev.layer = eval_int(call.args[0]);
      } else if (method == "optimizer") {
        check_arity(call, 1, 5);
        ev.kind = Event::Kind::Optimizer;
        ev.optimizer = optimizer_spec(call);
      } else if (method == "getLayers") {
        check_arity(call, 0, 0);
        continue;
      } else {
        throw DslError(ErrorKind::StatementOrder, s.loc, "gnn." + method + " is not allowed inside the epoch loop");
      }
      out.push_back(std::move(ev));
    }
  }

  OptimizerSpec optimizer_spec(const Expr& call) const {
    const std::string name = lower_case(eval_string(call.args[0]));
    auto kind = parse_optimizer(name);
    if (!kind)
      throw DslError(ErrorKind::BadArgument, call.args[0].loc,
                     "unknown optimizer '" + name + "' (valid: \"adam\", \"adamw\", \"sgd\")");
    const std::size_t n = call.args.size();
    const bool ok = (*kind == Optimizer::Sgd && n == 2) || (*kind == Optimizer::Adam && (n == 2 || n == 4)) ||
                    (*kind == Optimizer::AdamW && (n == 2 || n == 5));
    if (!ok)
      throw DslError(ErrorKind::WrongArity, call.loc,
                     "optimizer(\"" + name + "\", ...) takes " +
                         (*kind == Optimizer::Sgd    ? std::string("(name, lr)")
                          : *kind == Optimizer::Adam ? std::string("(name, lr) or (name, lr, beta1, beta2)")
                                                     : std::string("(name, lr) or (name, lr, beta1, beta2, decay)")) +
                         ", got " + std::to_string(n) + " argument(s)");
    OptimizerSpec spec;
    spec.kind = *kind;
    auto num = [&](std::size_t i) { return static_cast<float>(eval_number(call.args[i])); };
    spec.lr = num(1);
    if (n >= 4) {
      spec.beta1 = num(2);
      spec.beta2 = num(3);
    }
    if (n == 5) spec.weight_decay = num(4);
    if (!(spec.lr > 0.0f)) throw DslError(ErrorKind::BadArgument, call.args[1].loc, "learning rate must be positive");
    if (!(spec.beta1 > 0.0f && spec.beta1 < 1.0f))
      throw DslError(ErrorKind::BadArgument, call.args[2].loc, "beta1 must lie in (0, 1)");
    if (!(spec.beta2 > 0.0f && spec.beta2 < 1.0f))
      throw DslError(ErrorKind::BadArgument, call.args[3].loc, "beta2 must lie in (0, 1)");
    if (spec.weight_decay < 0.0f)
      throw DslError(ErrorKind::BadArgument, call.args[4].loc, "weight decay must be non-negative");
    return spec;
  }

  void validate(const std::vector<Event>& events, TrainingPlan& plan, SourceLoc epoch_loc) const {
    const std::int64_t layers = static_cast<std::int64_t>(plan.layer_dims.size()) - 1;
    plan.num_layers = static_cast<std::size_t>(layers);

    std::vector<const Event*> fwd, bwd, opt;
    for (const Event& e : events) {
      switch (e.kind) {
        case Event::Kind::Forward:
          if (!bwd.empty()) throw DslError(ErrorKind::StatementOrder, e.loc, "forwardPass after backPropagation");
          if (!opt.empty()) throw DslError(ErrorKind::StatementOrder, e.loc, "forwardPass after optimizer");
          fwd.push_back(&e);
          break;
        case Event::Kind::Backward:
          if (!opt.empty()) throw DslError(ErrorKind::StatementOrder, e.loc, "backPropagation after optimizer");
          bwd.push_back(&e);
          break;
        case Event::Kind::Optimizer:
          if (!opt.empty()) throw DslError(ErrorKind::Structure, e.loc, "optimizer appears more than once per epoch");
          opt.push_back(&e);
          break;
      }
    }
    if (fwd.empty()) throw DslError(ErrorKind::MissingForward, epoch_loc, "missing forwardPass");
    if (bwd.empty()) throw DslError(ErrorKind::MissingBackward, epoch_loc, "missing backPropagation");
    if (opt.empty()) throw DslError(ErrorKind::MissingOptimizer, epoch_loc, "missing optimizer");

    for (std::size_t i = 0; i < fwd.size(); ++i) {
      if (fwd[i]->layer != static_cast<std::int64_t>(i) || static_cast<std::int64_t>(i) >= layers)
        throw DslError(ErrorKind::ForwardOrder, fwd[i]->loc,
                       "forwardPass visits layer " + std::to_string(fwd[i]->layer) + " where layer " +
                           std::to_string(i) + " of 0.." + std::to_string(layers - 1) + " was expected");
      plan.forward_order.push_back(static_cast<std::size_t>(i));
    }
    if (static_cast<std::int64_t>(fwd.size()) != layers)
      throw DslError(ErrorKind::ForwardOrder, fwd.back()->loc,
                     "forwardPass covers " + std::to_string(fwd.size()) + " of " + std::to_string(layers) + " layers");
    for (std::size_t i = 0; i < bwd.size(); ++i) {
      const std::int64_t want = layers - 1 - static_cast<std::int64_t>(i);
      if (bwd[i]->layer != want)
        throw DslError(ErrorKind::BackwardOrder, bwd[i]->loc,
                       "backPropagation visits layer " + std::to_string(bwd[i]->layer) + " where layer " +
                           std::to_string(want) + " was expected (backward must be the exact reverse of forward)");
      plan.backward_order.push_back(static_cast<std::size_t>(want));
    }
    if (bwd.size() != fwd.size())
      throw DslError(ErrorKind::BackwardOrder, bwd.back()->loc,
                     "backPropagation covers " + std::to_string(bwd.size()) + " of " + std::to_string(layers) +
                         " layers");

    const std::string model = lower_case(fwd.front()->model);
    const std::string agg = lower_case(fwd.front()->aggregator);
    for (const Event* e : fwd)
      if (lower_case(e->model) != model || lower_case(e->aggregator) != agg)
        throw DslError(ErrorKind::BadArgument, e->loc, "every forwardPass must use the same model and aggregator");
    if (model == "gcn") {
      if (agg != "mean")
        throw DslError(ErrorKind::BadArgument, fwd.front()->loc,
                       "GCN supports only the \"Mean\" aggregator (normalized mean), got \"" + fwd.front()->aggregator +
                           "\"");
      plan.model_kind = "GCN";
      plan.aggregator = Aggregator::GcnNorm;
    } else if (model == "sage") {
      plan.model_kind = "SAGE";
      if (agg == "sum")
        plan.aggregator = Aggregator::Sum;
      else if (agg == "mean")
        plan.aggregator = Aggregator::Mean;
      else if (agg == "max")
        plan.aggregator = Aggregator::Max;
      else
        throw DslError(ErrorKind::BadArgument, fwd.front()->loc,
                       "unknown aggregator \"" + fwd.front()->aggregator + "\" (valid: \"Sum\", \"Mean\", \"Max\")");
    } else {
      throw DslError(ErrorKind::BadArgument, fwd.front()->loc,
                     "unknown model \"" + fwd.front()->model + "\" (valid: \"SAGE\", \"GCN\")");
    }
    plan.optimizer = opt.front()->optimizer;
  }
};

}  // namespace

TrainingPlan lower(const Ast& ast, const Bindings& bindings) {
  if (ast.functions.empty()) throw DslError(ErrorKind::Structure, {1, 1}, "program defines no function");
  if (ast.functions.size() > 1)
    throw DslError(ErrorKind::Structure, ast.functions[1].loc, "program must define exactly one function");
  const Function& fn = ast.functions.front();
  int graphs = 0, gnns = 0, containers = 0, strings = 0;
  for (const Param& p : fn.params) {
    graphs += p.type == ParamType::Graph;
    gnns += p.type == ParamType::Gnn;
    containers += p.type == ParamType::Container;
    strings += p.type == ParamType::String;
  }
  if (graphs != 1 || gnns != 1 || containers != 1 || strings > 1)
    throw DslError(ErrorKind::Structure, fn.loc,
                   "function needs one Graph, one GNN and one container<int> parameter (and at most one String)");
  return Lowerer(fn, bindings).run();
}

using nlohmann::json;

std::string plan_to_json(const TrainingPlan& plan) {
  json j;
  j["function"] = plan.function;
  j["dataset"] = plan.dataset;
  j["init"] = plan.init_scheme;
  j["layer_dims"] = plan.layer_dims;
  j["num_layers"] = plan.num_layers;
  j["model"] = plan.model_kind;
  j["aggregator"] = to_string(plan.aggregator);
  j["forward_order"] = plan.forward_order;
  j["backward_order"] = plan.backward_order;
  j["optimizer"] = {{"kind", to_string(plan.optimizer.kind)},
                    {"lr", plan.optimizer.lr},
                    {"beta1", plan.optimizer.beta1},
                    {"beta2", plan.optimizer.beta2},
                    {"weight_decay", plan.optimizer.weight_decay}};
  j["epochs"] = plan.epochs;
  return j.dump(2);
}

TrainingPlan plan_from_json(std::string_view text) {
  TrainingPlan plan;
  try {
    const json j = json::parse(text);
    plan.function = j.at("function").get<std::string>();
    plan.dataset = j.at("dataset").get<std::string>();
    plan.init_scheme = j.at("init").get<std::string>();
    plan.layer_dims = j.at("layer_dims").get<std::vector<std::size_t>>();
    plan.num_layers = j.at("num_layers").get<std::size_t>();
    plan.model_kind = j.at("model").get<std::string>();
    auto agg = parse_aggregator(j.at("aggregator").get<std::string>());
    if (!agg) throw std::invalid_argument("unknown aggregator");
    plan.aggregator = *agg;
    plan.forward_order = j.at("forward_order").get<std::vector<std::size_t>>();
    plan.backward_order = j.at("backward_order").get<std::vector<std::size_t>>();
    const json& o = j.at("optimizer");
    auto kind = parse_optimizer(o.at("kind").get<std::string>());
    if (!kind) throw std::invalid_argument("unknown optimizer");
    plan.optimizer.kind = *kind;
    plan.optimizer.lr = o.at("lr").get<float>();
    plan.optimizer.beta1 = o.at("beta1").get<float>();
    plan.optimizer.beta2 = o.at("beta2").get<float>();
    plan.optimizer.weight_decay = o.at("weight_decay").get<float>();
    plan.epochs = j.at("epochs").get<std::size_t>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed plan: ") + e.what());
  }
  if (plan.layer_dims.size() != plan.num_layers + 1) throw std::invalid_argument("plan layer_dims/num_layers mismatch");
  return plan;
}

TrainConfig to_train_config(const TrainingPlan& plan, TrainConfig base) {
  base.layer_dims = plan.layer_dims;
  base.aggregator = plan.aggregator;
  base.optimizer = plan.optimizer.kind;
  base.lr = plan.optimizer.lr;
  base.beta1 = plan.optimizer.beta1;
  base.beta2 = plan.optimizer.beta2;
  base.weight_decay = plan.optimizer.weight_decay;
  base.epochs = plan.epochs;
  return base;
}

}  // namespace gnnforge::dsl
