// Acceptance run: one line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "explia/pipeline.hpp"
#include "support.hpp"

using namespace explia;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string fmt_sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

json read_json(const fs::path& p) { return json::parse(dataset::read_file(p)); }

// Feature names of a rank,feature,... CSV in file order.
std::vector<std::string> ranked_features(const fs::path& p) {
  std::istringstream in(dataset::read_file(p));
  std::string line;
  std::getline(in, line);
  std::vector<std::string> out;
  while (std::getline(in, line)) {
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    out.push_back(line.substr(a + 1, b - a - 1));
  }
  return out;
}

bool top3_has(const std::vector<std::string>& ranked, const std::string& name) {
  return std::find(ranked.begin(), ranked.begin() + std::min<std::size_t>(3, ranked.size()), name) !=
         ranked.begin() + std::min<std::size_t>(3, ranked.size());
}

// The fixture cleaned, standardized and labelled at class level, as the
// ingest stage prepares it.
struct Prepared {
  dataset::FeatureMatrix x;
  dataset::LabelVector y;
};

Prepared prepare_fixture() {
  const auto& tax = dataset::LabelTaxonomy::ciciot2023();
  const auto raw = dataset::load_csv(EXPLIA_FIXTURE, dataset::ciciot_raw_schema(), tax);
  const auto cleaned = dataset::clean(raw);
  const auto enc = dataset::encode_labels(cleaned.table, dataset::LabelLevel::Class, tax);
  const auto stats = dataset::fit_standardizer(enc.matrix);
  const auto dropped = dataset::drop_zero_variance(dataset::standardize(enc.matrix, stats), stats);
  return {dropped.matrix, enc.labels};
}

balance::BalanceResult balance_fixture(const Prepared& p) {
  return balance::apply_plan(p.x, p.y, balance::BalancePlan::ciciot_default(), {std::nullopt, derive_seed(2023, "smote")});
}

Outcome balancing(const Prepared& p) {
  const auto r = balance_fixture(p);
  const auto counts = r.labels.counts();
  const auto& names = r.labels.names;
  bool ok = r.matrix.rows() == 4200;
  std::string detail = std::to_string(r.matrix.rows()) + " rows;";
  for (std::size_t g = 0; g < names.size(); ++g) {
    const std::size_t want = names[g] == "Benign" ? 2100 : 300;
    ok = ok && counts[g] == want;
    detail += " " + names[g] + "=" + std::to_string(counts[g]);
  }
  const auto bin = balance::binarize(r.labels, dataset::LabelTaxonomy::ciciot2023()).counts();
  ok = ok && bin == std::vector<std::size_t>{2100, 2100};
  return {ok, detail};
}

Outcome smote_properties(const Prepared& p) {
  const auto r = balance_fixture(p);
  // Group members by label, as the plan saw them.
  std::vector<std::vector<std::size_t>> members(p.y.names.size());
  for (std::size_t i = 0; i < p.y.size(); ++i) members[static_cast<std::size_t>(p.y.values[i])].push_back(i);
  std::size_t checked = 0, bad = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < r.synthetic.size(); ++i) {
    if (!r.synthetic[i]) continue;
    ++checked;
    const auto& o = r.origins[i];
    const auto xi = p.x.row(o.base);
    const auto xn = p.x.row(o.neighbor);
    double res = 0.0;
    for (std::size_t c = 0; c < p.x.cols(); ++c) {
      const double e = r.matrix(i, c) - (xi[c] + o.lambda * (xn[c] - xi[c]));
      res += e * e;
    }
    res = std::sqrt(res);
    worst = std::max(worst, res);
    // Neighbor validity: within the same group and no farther than the k-th nearest.
    const auto& group = members[static_cast<std::size_t>(r.labels.values[i])];
    const std::size_t k = balance::SmoteParams{}.effective_k(group.size());
    std::vector<double> d;
    double dn = -1.0;
    for (auto q : group) {
      if (q == o.base) continue;
      double s = 0.0;
      for (std::size_t c = 0; c < p.x.cols(); ++c) s += std::pow(xi[c] - p.x(q, c), 2);
      d.push_back(s);
      if (q == o.neighbor) dn = s;
    }
    std::sort(d.begin(), d.end());
    const bool valid = res < 1e-12 && o.lambda >= 0.0 && o.lambda <= 1.0 && dn >= 0.0 && dn <= d[k - 1];
    bad += valid ? 0 : 1;
  }
  return {checked > 0 && bad == 0,
          std::to_string(checked) + " synthetic rows, " + std::to_string(bad) + " failing, max residual " +
              fmt_sci(worst)};
}

Outcome shapley() {
  std::size_t instances = 0;
  double worst_tree = 0.0, worst_add = 0.0, worst_z = 0.0;
  bool sampling_ok = true;
  auto add = [&](const explain::ShapValues& s) {
    worst_add = std::max(worst_add, std::abs(s.base_value + s.sum_phi() - s.output));
  };
  {
    const auto d = support::planted(400, 4, 4, 3);
    const models::TrainedModel gbt = models::train_gbt(d.x, d.y, {.n_trees = 30, .max_depth = 4});
    const models::TrainedModel rf = models::train_rf(d.x, d.y, {.n_trees = 20, .seed = 2});
    const auto bg = d.x.select_rows(balance::undersample(d.x.rows(), 10, 1));
    const auto q = support::gaussian(50, 8, 4);
    for (const auto* m : {&gbt, &rf}) {
      for (std::size_t r = 0; r < q.rows(); ++r) {
        const auto t = explain::shap_tree(*m, q.row(r), bg);
        const auto e = explain::shap_exact(*m, q.row(r), bg);
        add(t);
        add(e);
        for (std::size_t j = 0; j < 8; ++j) worst_tree = std::max(worst_tree, std::abs(t.phi[j] - e.phi[j]));
        ++instances;
      }
    }
  }
  {
    const auto d = support::planted(60, 3, 3, 8);
    const models::TrainedModel knn = models::train_knn(d.x, d.y, 5);
    const auto bg = dataset::FeatureMatrix(support::schema_of_width(6), support::gaussian(8, 6, 9));
    const auto q = support::gaussian(50, 6, 10);
    for (std::size_t r = 0; r < q.rows(); ++r) {
      const auto s = explain::shap_sampling(knn, q.row(r), bg, 2000, derive_seed(11, r));
      const auto e = explain::shap_exact(knn, q.row(r), bg);
      add(s);
      for (std::size_t j = 0; j < 6; ++j) {
        const double err = std::abs(s.phi[j] - e.phi[j]);
        if (s.std_error[j] > 0.0) worst_z = std::max(worst_z, err / s.std_error[j]);
        if (err > 3.0 * s.std_error[j] + 1e-12) sampling_ok = false;
      }
      ++instances;
    }
  }
  const bool ok = worst_tree <= 1e-6 && worst_add <= 1e-9 && sampling_ok;
  std::ostringstream os;
  os << instances << " instances; tree max err " << fmt_sci(worst_tree) << ", sampling max |err|/SE "
     << fmt(worst_z, 2) << " (<=3), additivity max gap " << fmt_sci(worst_add);
  return {ok, os.str()};
}

Outcome lime_fidelity() {
  const auto schema = support::schema_of_width(4);
  const explain::OutputFn f = [](std::span<const double> v) { return logistic(3.0 * v[0] - 2.0 * v[1]); };
  const std::vector<double> x{0.2, 0.1, -0.4, 0.7};
  std::size_t good = 0;
  double lo = 1e9, hi = -1e9;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    explain::LimeParams p;
    p.num_features = 2;
    p.seed = seed;
    const auto e = explain::lime_explain(f, x, schema, p);
    const auto w = e.dense_weights();
    std::set<std::size_t> sel;
    for (const auto& ft : e.features) sel.insert(ft.feature);
    const double ratio = w[1] != 0.0 ? std::abs(w[0] / w[1]) : 0.0;
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
    if (sel == std::set<std::size_t>{0, 1} && w[0] > 0.0 && w[1] < 0.0 && std::abs(ratio - 1.5) <= 0.15) ++good;
  }
  return {good == 20, std::to_string(good) + "/20 seeds; |w1/w2| in [" + fmt(lo, 3) + ", " + fmt(hi, 3) + "]"};
}

Outcome planted_consensus() {
  const auto d = support::planted(1000, 5, 15, 21);
  const models::TrainedModel gbt = models::train_gbt(d.x, d.y, {.n_trees = 50, .max_depth = 3});
  const models::TrainedModel rf = models::train_rf(d.x, d.y, {.n_trees = 100, .seed = 5});
  const auto bg = d.x.select_rows(balance::undersample(d.x.rows(), 50, 1));
  const auto ev = d.x.select_rows(balance::undersample(d.x.rows(), 200, 2));
  const std::vector<std::pair<std::string, std::vector<double>>> sources{
      {"gbt_gain", models::importance_gain(gbt).scores},
      {"rf_gain", models::importance_gain(rf).scores},
      {"shap_global", explain::shap_global(gbt, ev, bg).mean_abs}};
  bool ok = true;
  std::string detail;
  for (const auto& [name, s] : sources) {
    double min_inf = 1e300, max_noise = -1e300;
    for (auto j : d.informative) min_inf = std::min(min_inf, s[j]);
    for (auto j : d.noise) max_noise = std::max(max_noise, s[j]);
    ok = ok && min_inf > max_noise;
    detail += " " + name + (min_inf > max_noise ? " separated" : " MIXED");
  }
  return {ok, detail};
}

struct Criterion {
  int id;
  std::string title;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  support::TempDir work("acceptance");
  const auto config_for = [&](const std::string& out) {
    return pipeline::PipelineConfig::parse("data.dir = " + fs::path(EXPLIA_FIXTURE).parent_path().string() +
                                           "\nout = " + (work / out).string() + "\n");
  };

  const auto t0 = std::chrono::steady_clock::now();
  std::clog << "running the default pipeline on the bundled fixture...\n";
  const auto report_a = pipeline::cmd_pipeline(config_for("run_a"));
  const double pipeline_a_s = seconds_since(t0);
  const fs::path out = work / "run_a";
  const auto stage_s = [&](const std::string& name) {
    for (const auto& s : report_a["stages"]) {
      if (s["name"] == name) return s["seconds"].get<double>();
    }
    return 0.0;
  };

  std::optional<Prepared> prepared;

  std::vector<Criterion> criteria{
      {1, "balancing reproduction", 5.0, [&] {
         prepared = prepare_fixture();
         return balancing(*prepared);
       }},
      {2, "accuracy envelope", 120.0,
       [&] {
         const auto m = read_json(out / "evaluate" / "metrics.json");
         std::map<std::string, double> acc;
         for (const auto& e : m["models"]) acc[e["model"]] = e["metrics"]["accuracy"];
         const bool ok = acc["gbt"] >= 0.93 && acc["rf"] >= 0.91 && acc["knn"] >= 0.84 && acc["gbt"] >= acc["rf"] &&
                         acc["rf"] >= acc["knn"];
         return Outcome{ok, "gbt " + fmt(acc["gbt"]) + " (>=0.93), rf " + fmt(acc["rf"]) + " (>=0.91), knn " +
                                fmt(acc["knn"]) + " (>=0.84), test rows " + std::to_string(m["test_rows"].get<int>()) +
                                "; stages " + fmt(stage_s("ingest") + stage_s("balance") + stage_s("train") + stage_s("evaluate"), 1) + " s"};
       }},
      {3, "RFE improvement", 600.0,
       [&] {
         const auto r = read_json(out / "rfe" / "rfe.json");
         const double tol = r["trace"]["tolerance"];
         const double fb = r["fold_baseline"], fbest = r["fold_best"];
         const double tb = r["test_baseline"], tf = r["test_final"];
         // Every accepted iteration must respect the acceptance rule.
         bool rule = true;
         double prev = r["trace"]["iterations"][0]["score"];
         for (const auto& it : r["trace"]["iterations"]) {
           if (it["kind"] == "baseline") continue;
           const bool should = it["score"].get<double>() >= prev - tol;
           rule = rule && should == it["accepted"].get<bool>();
           if (it["accepted"]) prev = it["score"];
         }
         const double gain_pts = 100.0 * (tf - tb);
         const bool ok = rule && fbest >= fb - tol && tf >= tb - tol && gain_pts >= 0.5;
         return Outcome{ok, "test " + fmt(tb) + " -> " + fmt(tf) + " (" + fmt(gain_pts, 2) + " pts, need >=0.50); fold " +
                                fmt(fb) + " -> " + fmt(fbest) + "; " + std::to_string(r["features_before"].get<int>()) +
                                " -> " + std::to_string(r["features_after"].get<int>()) + " features; " +
                                fmt(stage_s("rfe"), 1) + " s"};
       }},
      {4, "Shapley correctness", 60.0, shapley},
      {5, "LIME fidelity", 30.0, lime_fidelity},
      {6, "feature consensus", 600.0,
       [&] {
         const auto gbt = ranked_features(out / "evaluate" / "importance_gbt_gain.csv");
         const auto rf = ranked_features(out / "evaluate" / "importance_rf_gain.csv");
         const auto shap = ranked_features(out / "explain" / "shap_global.csv");
         bool ok = true;
         for (const auto* r : {&gbt, &rf, &shap}) ok = ok && top3_has(*r, "rst_count") && top3_has(*r, "IAT");
         const auto planted = planted_consensus();
         const auto top3 = [](const std::vector<std::string>& r) { return r[0] + "," + r[1] + "," + r[2]; };
         return Outcome{ok && planted.pass, "gbt gain [" + top3(gbt) + "], rf gain [" + top3(rf) + "], shap [" +
                                                top3(shap) + "]; planted:" + planted.detail};
       }},
      {7, "SHAP-LIME cross-validation", 600.0,
       [&] {
         const auto a = read_json(out / "agree" / "agreement.json");
         std::size_t n = 0, model_match = 0, lime_match = 0;
         for (const auto& e : a["report"]["local"]) {
           ++n;
           model_match += e["agreement"]["shap_matches_model"].get<bool>() ? 1 : 0;
           lime_match += e["agreement"]["shap_matches_lime"].get<bool>() ? 1 : 0;
         }
         const double lime_rate = n ? static_cast<double>(lime_match) / static_cast<double>(n) : 0.0;
         return Outcome{n > 0 && model_match == n && lime_rate >= 0.9,
                        std::to_string(n) + " samples; SHAP=model " + std::to_string(model_match) + "/" +
                            std::to_string(n) + ", SHAP=LIME " + fmt(lime_rate, 3) + " (>=0.90)"};
       }},
      {8, "determinism", 600.0,
       [&] {
         const auto report_b = pipeline::cmd_pipeline(config_for("run_b"));
         const auto& ma = report_a["manifest"];
         const auto& mb = report_b["manifest"];
         bool ok = ma.size() == mb.size() && !ma.empty();
         std::size_t differ = 0;
         for (std::size_t i = 0; ok && i < ma.size(); ++i) {
           if (ma[i]["path"] != mb[i]["path"] || ma[i]["sha256"] != mb[i]["sha256"]) ++differ;
         }
         ok = ok && differ == 0;
         return Outcome{ok, std::to_string(ma.size()) + " artifacts, " + std::to_string(differ) + " differing"};
       }},
      {9, "SMOTE properties", 60.0, [&] { return smote_properties(prepared ? *prepared : prepare_fixture()); }},
  };

  std::clog << "pipeline run took " << fmt(pipeline_a_s, 1) << " s\n";
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double s = seconds_since(start);
    const bool pass = o.pass && s <= c.budget_s;
    failures += pass ? 0 : 1;
    std::cout << "criterion " << c.id << ' ' << (pass ? "PASS" : "FAIL") << "  " << c.title << ": " << o.detail
              << " [" << fmt(s, 2) << " s]" << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failures == 0 ? 0 : 1;
}
