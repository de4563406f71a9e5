#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "loadshed/binding_learner.hpp"
#include "loadshed/errors.hpp"
#include "support/paths.hpp"

using namespace loadshed;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("loadshed_test_" + name);
  std::filesystem::create_directories(dir);
  return dir;
}

// tau_1 = 1 iff pi_1 + pi_2 > 1, tau_2 always 1, tau_3 always 0. Points
// within `margin` of the boundary are skipped.
Dataset separable(std::size_t n, std::uint64_t seed, double margin = 0.05) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset ds;
  while (ds.size() < n) {
    Eigen::VectorXd pi(2);
    pi << u(rng), u(rng);
    if (std::abs(pi.sum() - 1.0) < margin) continue;
    ds.inputs.push_back(pi);
    ds.outputs.push_back({static_cast<std::uint8_t>(pi.sum() > 1.0), 1, 0});
  }
  return ds;
}

double rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12});
}

}  // namespace

TEST_SUITE("binding_learner") {

TEST_CASE("zero weights give sigmoid(0) everywhere") {
  const Mlp net = Mlp::zeros({4, 8, 8, 8, 3});
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 5);
  const Eigen::MatrixXd y = net.forward(x);
  CHECK(y.rows() == 3);
  CHECK(y.cols() == 5);
  CHECK((y.array() - 0.5).abs().maxCoeff() == 0.0);
}

TEST_CASE("Glorot initialisation bounds") {
  std::mt19937_64 rng(1);
  const Mlp net = Mlp::init({10, 20, 5}, rng);
  CHECK(net.num_layers() == 2);
  CHECK(net.W[0].rows() == 20);
  CHECK(net.W[0].cols() == 10);
  CHECK(net.W[0].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 30.0));
  CHECK(net.W[1].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 25.0));
  CHECK(net.b[0].norm() == 0.0);
}

TEST_CASE("analytic gradients match central differences") {
  for (LossKind kind : {LossKind::bce, LossKind::focal}) {
    CAPTURE(static_cast<int>(kind));
    std::mt19937_64 rng(7);
    Mlp net = Mlp::init({3, 6, 5, 4, 2}, rng);
    std::normal_distribution<double> nd(0.0, 0.3);
    for (auto& b : net.b) b = b.unaryExpr([&](double) { return nd(rng); });
    const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(3, 9, [&] { return 2.0 * nd(rng); });
    std::bernoulli_distribution coin(0.5);
    const Eigen::MatrixXd y = Eigen::MatrixXd::NullaryExpr(2, 9, [&] { return coin(rng) ? 1.0 : 0.0; });

    MlpGradient g;
    loss_and_gradient(net, x, y, kind, 2.0, &g);
    const double h = 1e-5;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      Eigen::MatrixXd num_w(net.W[l].rows(), net.W[l].cols());
      for (Eigen::Index i = 0; i < num_w.size(); ++i) {
        const double keep = net.W[l].data()[i];
        net.W[l].data()[i] = keep + h;
        const double up = loss(net, x, y, kind, 2.0);
        net.W[l].data()[i] = keep - h;
        const double down = loss(net, x, y, kind, 2.0);
        net.W[l].data()[i] = keep;
        num_w.data()[i] = (up - down) / (2.0 * h);
      }
      Eigen::VectorXd num_b(net.b[l].size());
      for (Eigen::Index i = 0; i < num_b.size(); ++i) {
        const double keep = net.b[l][i];
        net.b[l][i] = keep + h;
        const double up = loss(net, x, y, kind, 2.0);
        net.b[l][i] = keep - h;
        const double down = loss(net, x, y, kind, 2.0);
        net.b[l][i] = keep;
        num_b[i] = (up - down) / (2.0 * h);
      }
      CHECK(rel_error(g.dW[l], num_w) <= 1e-6);
      CHECK(rel_error(g.db[l], num_b) <= 1e-6);
    }
  }
}

TEST_CASE("BCE of a known prediction") {
  const Mlp net = Mlp::zeros({1, 2, 1});
  const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, 2);
  Eigen::MatrixXd y(1, 2);
  y << 1.0, 0.0;
  CHECK(loss(net, x, y, LossKind::bce, 2.0) == doctest::Approx(std::log(2.0)));
  // Focal weight (1 - 0.5)^2 = 0.25.
  CHECK(loss(net, x, y, LossKind::focal, 2.0) == doctest::Approx(0.25 * std::log(2.0)));
}

TEST_CASE("output reduction") {
  SUBCASE("identical patterns") {
    Dataset ds;
    ds.inputs = {Eigen::VectorXd::Ones(2), Eigen::VectorXd::Zero(2)};
    ds.outputs = {{1, 0, 1}, {1, 0, 1}};
    const OutputReduction red = reduce_outputs(ds);
    CHECK(red.varying.empty());
    CHECK(red.constant.size() == 3);
    CHECK(red.reconstruct({}) == ds.outputs[0]);
  }
  SUBCASE("one differing column") {
    Dataset ds;
    ds.inputs = {Eigen::VectorXd::Ones(2), Eigen::VectorXd::Zero(2)};
    ds.outputs = {{1, 0, 1, 0}, {1, 1, 1, 0}};
    const OutputReduction red = reduce_outputs(ds);
    CHECK(red.varying == std::vector<std::size_t>{1});
    CHECK(red.constant.at(0) == 1);
    CHECK(red.constant.at(3) == 0);
  }
  SUBCASE("reconstruction is the identity on random datasets") {
    std::mt19937_64 rng(2);
    std::bernoulli_distribution coin(0.3);
    for (int trial = 0; trial < 20; ++trial) {
      Dataset ds;
      const std::size_t m = 30;
      std::vector<bool> fixed(m);
      for (std::size_t i = 0; i < m; ++i) fixed[i] = coin(rng);
      for (int s = 0; s < 25; ++s) {
        ds.inputs.push_back(Eigen::VectorXd::Constant(1, s));
        std::vector<std::uint8_t> tau(m);
        for (std::size_t i = 0; i < m; ++i) tau[i] = fixed[i] ? static_cast<std::uint8_t>(i % 2) : coin(rng);
        ds.outputs.push_back(tau);
      }
      const OutputReduction red = reduce_outputs(ds);
      CHECK(red.varying.size() + red.constant.size() == m);
      for (const auto& tau : ds.outputs) {
        std::vector<std::uint8_t> vary;
        for (auto i : red.varying) vary.push_back(tau[i]);
        CHECK(red.reconstruct(vary) == tau);
      }
    }
  }
  CHECK_THROWS_AS(reduce_outputs(Dataset{}), InvariantError);
}

TEST_CASE("separable dataset is learned exactly") {
  const Dataset ds = separable(500, 3);
  const OutputReduction red = reduce_outputs(ds);
  REQUIRE(red.varying == std::vector<std::size_t>{0});
  TrainConfig cfg;
  cfg.hidden = {16, 16, 16};
  cfg.batch_size = 16;
  cfg.epochs = 300;
  cfg.seed = 5;
  const TrainResult res = train(ds, red, cfg);
  CHECK(res.validation_accuracy.per_constraint == 1.0);
  CHECK(res.validation_accuracy.per_sample == 1.0);
  CHECK(res.train_accuracy.per_constraint >= 0.99);
  CHECK(res.validation_indices.size() == 100);
  CHECK(res.loss_history.size() == 300);
  CHECK(res.loss_history.back() < res.loss_history.front());

  Eigen::VectorXd deep(2);
  deep << 0.95, 0.95;
  const Prediction p = predict(res.model, LoadVector(deep));
  CHECK(p.pattern.tau == std::vector<std::uint8_t>{1, 1, 0});
  CHECK(p.pattern.source == BindingSource::predicted);
  CHECK_FALSE(p.extrapolated);

  Eigen::VectorXd outside(2);
  outside << 3.0, 0.5;
  CHECK(predict(res.model, LoadVector(outside)).extrapolated);
  CHECK_THROWS_AS(predict(res.model, LoadVector(Eigen::VectorXd::Ones(3))), DimensionError);

  SUBCASE("training is deterministic for a seed") {
    const TrainResult again = train(ds, red, cfg);
    CHECK(again.loss_history == res.loss_history);
  }
  SUBCASE("model JSON round trip") {
    const auto path = temp_dir("model") / "model.json";
    write_model(res.model, path);
    const BindingModel back = read_model(path);
    const Accuracy a = evaluate(back, ds, res.validation_indices);
    CHECK(a.per_constraint == res.validation_accuracy.per_constraint);
    for (const auto& pi : ds.inputs) {
      CHECK(predict(back, LoadVector(pi)).pattern == predict(res.model, LoadVector(pi)).pattern);
    }
    CHECK_THROWS_AS(model_from_json(nlohmann::json{{"layer_sizes", {2, 3}}}), ParseError);
  }
}

TEST_CASE("constant targets cannot be trained") {
  Dataset ds;
  for (int s = 0; s < 10; ++s) {
    ds.inputs.push_back(Eigen::VectorXd::Constant(1, s));
    ds.outputs.push_back({1, 0});
  }
  const OutputReduction red = reduce_outputs(ds);
  try {
    train(ds, red, TrainConfig{});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("no varying outputs") != std::string::npos);
  }
}

TEST_CASE("3-bus sweep over the third load") {
  // d3 = 45 needs 15 MW of shed but the shed caps allow 2 + 3 + 9 = 14 MW, so
  // only 35 and 40 are feasible.
  const GridCase g = load_case(testing::case_path("3bus.case"));
  SweepSpec spec;
  spec.axes.push_back({2, 35.0, 5.0, 3});
  const Dataset ds = generate_dataset(g, spec);
  REQUIRE(ds.size() == 2);
  CHECK(ds.meta.at("infeasible") == 1);
  ds.validate();
  for (std::size_t k = 0; k < ds.size(); ++k) {
    CHECK(ds.inputs[k][2] == 35.0 + 5.0 * static_cast<double>(k));
    CHECK(ds.inputs[k][0] == 20.0);
    const QuadraticProgram qp = build(g, LoadVector(ds.inputs[k]));
    const PrimalDualSolution sol = solve(qp);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(binding_status(sol, qp).pattern.tau == ds.outputs[k]);
  }

  SUBCASE("single point") {
    SweepSpec one;
    one.axes.push_back({0, 20.0, 5.0, 1});
    const Dataset single = generate_dataset(g, one);
    REQUIRE(single.size() == 1);
    const QuadraticProgram qp = build(g);
    CHECK(single.outputs[0] == binding_status(solve(qp), qp).pattern.tau);
  }
  SUBCASE("parallel generation gives the same dataset") {
    SweepSpec par = spec;
    par.jobs = 3;
    const Dataset again = generate_dataset(g, par);
    CHECK(again.outputs == ds.outputs);
  }
  SUBCASE("CSV round trip") {
    const auto path = temp_dir("dataset") / "ds.csv";
    write_dataset(ds, path);
    const Dataset back = read_dataset(path);
    CHECK(back.outputs == ds.outputs);
    REQUIRE(back.size() == ds.size());
    for (std::size_t k = 0; k < ds.size(); ++k) CHECK((back.inputs[k] - ds.inputs[k]).norm() == 0.0);
  }
  SUBCASE("limits") {
    SweepSpec big = spec;
    big.max_points = 2;
    CHECK_THROWS_AS(generate_dataset(g, big), InvariantError);
    SweepSpec bad;
    bad.axes.push_back({7, 1.0, 1.0, 2});
    CHECK_THROWS_AS(generate_dataset(g, bad), DimensionError);
  }
}

TEST_CASE("dataset validation and malformed CSV") {
  Dataset ds;
  ds.inputs = {Eigen::VectorXd::Ones(2)};
  ds.outputs = {{1}, {0}};
  CHECK_THROWS_AS(ds.validate(), InvariantError);
  ds.outputs = {{1}};
  ds.inputs[0][1] = -1.0;
  CHECK_THROWS_AS(ds.validate(), InvariantError);

  const auto path = temp_dir("badcsv") / "bad.csv";
  {
    std::ofstream out(path);
    out << "pi_1,tau_1\n1.0,2\n";
  }
  CHECK_THROWS_AS(read_dataset(path), ParseError);
}

}  // TEST_SUITE
