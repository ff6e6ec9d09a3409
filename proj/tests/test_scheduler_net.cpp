#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "cbs/scheduler_net.hpp"

using namespace cbs;

namespace {

FeatureVector random_feature(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  FeatureVector h;
  for (auto& v : h.values) v = normal(rng);
  return h;
}

TrainingBatch random_batch(std::mt19937_64& rng, std::size_t k) {
  std::normal_distribution<double> normal(0.0, 1.0);
  TrainingBatch b;
  for (std::size_t i = 0; i < k; ++i) {
    b.features.push_back(random_feature(rng));
    b.targets.push_back(normal(rng));
  }
  return b;
}

// Plain loops, independent of the Eigen forward pass.
double oracle_forward(const SchedulerNet& net, const FeatureVector& h) {
  std::vector<double> a(h.values.begin(), h.values.end());
  const auto& ws = net.weights();
  for (std::size_t l = 0; l < ws.size(); ++l) {
    std::vector<double> z(static_cast<std::size_t>(ws[l].rows()), 0.0);
    for (Eigen::Index r = 0; r < ws[l].rows(); ++r)
      for (Eigen::Index c = 0; c < ws[l].cols(); ++c) z[r] += ws[l](r, c) * a[c];
    if (l + 1 < ws.size())
      for (auto& v : z) v = std::max(v, 0.0);
    a = z;
  }
  return a[0];
}

double max_abs_diff(const SchedulerNet& a, const SchedulerNet& b) {
  double d = 0.0;
  for (std::size_t l = 0; l < a.weights().size(); ++l)
    d = std::max(d, (a.weights()[l] - b.weights()[l]).cwiseAbs().maxCoeff());
  return d;
}

}  // namespace

TEST_CASE("init shapes and determinism") {
  const auto net = SchedulerNet::init(3, 64, 42);
  REQUIRE(net.weights().size() == 3);
  CHECK(net.weights()[0].rows() == 64);
  CHECK(net.weights()[0].cols() == 10);
  CHECK(net.weights()[1].rows() == 64);
  CHECK(net.weights()[1].cols() == 64);
  CHECK(net.weights()[2].rows() == 1);
  CHECK(net.weights()[2].cols() == 64);
  CHECK(net.depth() == 3);
  CHECK(net.width() == 64);
  CHECK(net.seed() == 42);

  const auto again = SchedulerNet::init(3, 64, 42);
  for (std::size_t l = 0; l < 3; ++l) CHECK(net.weights()[l] == again.weights()[l]);
  CHECK(SchedulerNet::init(3, 64, 43).weights()[0] != net.weights()[0]);

  const auto deep = SchedulerNet::init(5, 3, 1);
  CHECK(deep.weights().size() == 5);
  CHECK(deep.weights()[4].cols() == 3);

  CHECK_THROWS_AS(SchedulerNet::init(1, 8, 0), std::invalid_argument);
  CHECK_THROWS_AS(SchedulerNet::init(3, 0, 0), std::invalid_argument);
}

TEST_CASE("init variances") {
  const auto net = SchedulerNet::init(3, 4096, 1);
  const auto sample_var = [](const Eigen::MatrixXd& w) {
    const double mean = w.mean();
    return (w.array() - mean).square().sum() / static_cast<double>(w.size() - 1);
  };
  const double last = sample_var(net.weights()[2]);
  CHECK(last > 0.8 / 4096.0);
  CHECK(last < 1.2 / 4096.0);
  const double first = sample_var(net.weights()[0]);
  CHECK(first == doctest::Approx(2.0 / 4096.0).epsilon(0.05));
}

TEST_CASE("predict") {
  const auto net = SchedulerNet::init(3, 16, 5);
  CHECK(predict(net, FeatureVector{}) == 0.0);

  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto h = random_feature(rng);
    CHECK(predict(net, h) == doctest::Approx(oracle_forward(net, h)).epsilon(1e-12));
  }

  SUBCASE("two layers with identity rows and a ones head sum positive inputs") {
    Eigen::MatrixXd w1 = Eigen::MatrixXd::Identity(10, 10);
    Eigen::MatrixXd w2 = Eigen::MatrixXd::Ones(1, 10);
    const auto two = SchedulerNet::from_weights({w1, w2});
    FeatureVector h;
    double sum = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
      h[i] = 0.5 + static_cast<double>(i);
      sum += h[i];
    }
    CHECK(predict(two, h) == doctest::Approx(sum).epsilon(1e-15));
  }

  SUBCASE("last layer scaling") {
    auto scaled = net;
    scaled.weights().back() *= 3.5;
    const auto h = random_feature(rng);
    CHECK(predict(scaled, h) == doctest::Approx(3.5 * predict(net, h)).epsilon(1e-12));
  }

  SUBCASE("non-finite input") {
    FeatureVector h;
    h[2] = std::nan("");
    CHECK_THROWS_AS(predict(net, h), std::invalid_argument);
    h[2] = INFINITY;
    CHECK_THROWS_AS(predict(net, h), std::invalid_argument);
  }

  SUBCASE("batch agrees with single predictions") {
    std::vector<FeatureVector> fs;
    for (int i = 0; i < 7; ++i) fs.push_back(random_feature(rng));
    const auto batch = predict_batch(net, std::span<const FeatureVector>(fs));
    for (std::size_t i = 0; i < fs.size(); ++i) CHECK(batch[i] == doctest::Approx(predict(net, fs[i])));
  }
}

TEST_CASE("from_weights rejects broken shapes") {
  CHECK_THROWS_AS(SchedulerNet::from_weights({Eigen::MatrixXd::Ones(4, 10)}), std::invalid_argument);
  CHECK_THROWS_AS(SchedulerNet::from_weights({Eigen::MatrixXd::Ones(4, 9), Eigen::MatrixXd::Ones(1, 4)}),
                  std::invalid_argument);
  CHECK_THROWS_AS(SchedulerNet::from_weights({Eigen::MatrixXd::Ones(4, 10), Eigen::MatrixXd::Ones(1, 3)}),
                  std::invalid_argument);
  CHECK_THROWS_AS(SchedulerNet::from_weights({Eigen::MatrixXd::Ones(4, 10), Eigen::MatrixXd::Ones(4, 4),
                                              Eigen::MatrixXd::Ones(2, 4)}),
                  std::invalid_argument);
}

TEST_CASE("loss") {
  Eigen::MatrixXd w1 = Eigen::MatrixXd::Zero(1, 10);
  w1(0, 0) = 1.0;
  Eigen::MatrixXd w2 = Eigen::MatrixXd::Ones(1, 1);
  const auto net = SchedulerNet::from_weights({w1, w2});  // s(h) = relu(h_0)
  FeatureVector one, zero;
  one[0] = 1.0;

  CHECK(loss(net, TrainingBatch{{one}, {1.0}}) == 0.0);
  CHECK(loss(net, TrainingBatch{{one}, {0.0}}) == 1.0);
  CHECK(loss(net, TrainingBatch{{one, zero}, {0.0, 1.0}}) == 1.0);
  CHECK_THROWS_AS(loss(net, TrainingBatch{}), std::invalid_argument);
  CHECK_THROWS_AS(loss(net, TrainingBatch{{one}, {1.0, 2.0}}), std::invalid_argument);
}

TEST_CASE("sgd_update") {
  std::mt19937_64 rng(17);
  const auto net = SchedulerNet::init(3, 8, 2);
  const auto batch = random_batch(rng, 5);

  const auto same = sgd_update(net, batch, 0.0);
  CHECK(max_abs_diff(same, net) == 0.0);

  TrainingBatch fitted = batch;
  for (std::size_t i = 0; i < fitted.features.size(); ++i) fitted.targets[i] = predict(net, fitted.features[i]);
  CHECK(max_abs_diff(sgd_update(net, fitted, 0.1), net) <= 1e-12);

  CHECK_THROWS_AS(sgd_update(net, TrainingBatch{}, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(sgd_update(net, batch, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(sgd_update(net, batch, std::nan("")), std::invalid_argument);
}

TEST_CASE("single-sample depth-2 gradient matches finite differences") {
  std::mt19937_64 rng(23);
  const auto net = SchedulerNet::init(2, 6, 9);
  const auto batch = random_batch(rng, 1);
  const auto g = loss_gradient(net, batch);
  constexpr double h = 1e-5;
  double diff = 0.0, norm = 0.0;
  for (std::size_t l = 0; l < 2; ++l)
    for (Eigen::Index j = 0; j < net.weights()[l].size(); ++j) {
      auto p = net, m = net;
      p.weights()[l].data()[j] += h;
      m.weights()[l].data()[j] -= h;
      const double fd = (loss(p, batch) - loss(m, batch)) / (2 * h);
      diff += std::pow(fd - g[l].data()[j], 2);
      norm += fd * fd;
    }
  CHECK(std::sqrt(diff / norm) < 1e-5);
}

TEST_CASE("random small nets: gradient oracle") {
  std::mt19937_64 rng(31);
  constexpr double h = 1e-5;
  for (int inst = 0; inst < 100; ++inst) {
    const int depth = 2 + inst % 2;
    const int width = 1 + static_cast<int>(rng() % 8);
    const auto net = SchedulerNet::init(depth, width, rng());
    const auto batch = random_batch(rng, 1 + rng() % 8);
    const auto g = loss_gradient(net, batch);
    double diff = 0.0, na = 0.0, nf = 0.0;
    for (std::size_t l = 0; l < net.weights().size(); ++l) {
      CHECK(g[l].rows() == net.weights()[l].rows());
      CHECK(g[l].cols() == net.weights()[l].cols());
      for (Eigen::Index j = 0; j < net.weights()[l].size(); ++j) {
        auto p = net, m = net;
        p.weights()[l].data()[j] += h;
        m.weights()[l].data()[j] -= h;
        const double fd = (loss(p, batch) - loss(m, batch)) / (2 * h);
        diff += std::pow(fd - g[l].data()[j], 2);
        na += g[l].data()[j] * g[l].data()[j];
        nf += fd * fd;
      }
    }
    const double scale = std::max({std::sqrt(na), std::sqrt(nf), 1e-12});
    CHECK(std::sqrt(diff) / scale < 1e-5);
  }
}

TEST_CASE("small steps never increase the batch loss") {
  std::mt19937_64 rng(41);
  for (int inst = 0; inst < 100; ++inst) {
    const auto net = SchedulerNet::init(2 + inst % 3, 1 + static_cast<int>(rng() % 16), rng());
    const auto batch = random_batch(rng, 1 + rng() % 10);
    CHECK(loss(sgd_update(net, batch, 1e-6), batch) <= loss(net, batch) + 1e-10);
  }
}

TEST_CASE("identical update sequences give bit-identical weights") {
  std::mt19937_64 a_rng(5), b_rng(5);
  auto a = SchedulerNet::init(3, 8, 77);
  auto b = SchedulerNet::init(3, 8, 77);
  for (int step = 0; step < 50; ++step) {
    a = sgd_update(a, random_batch(a_rng, 4), 1e-2);
    b = sgd_update(b, random_batch(b_rng, 4), 1e-2);
  }
  for (std::size_t l = 0; l < a.weights().size(); ++l) CHECK(a.weights()[l] == b.weights()[l]);
  CHECK(a.all_finite());
}

TEST_CASE("regression sanity on a random linear map") {
  std::mt19937_64 rng(123);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd w(10);
  for (auto& v : w) v = normal(rng);
  TrainingBatch data;
  for (int i = 0; i < 64; ++i) {
    const auto h = random_feature(rng);
    double y = 0.0;
    for (std::size_t j = 0; j < 10; ++j) y += w[static_cast<Eigen::Index>(j)] * h[j];
    data.features.push_back(h);
    data.targets.push_back(y);
  }
  auto net = SchedulerNet::init(3, 64, 7);
  const double initial = loss(net, data);
  for (int step = 0; step < 500; ++step) net = sgd_update(net, data, 1e-2);
  CHECK(loss(net, data) < 0.1 * initial);
  CHECK(net.all_finite());
}

TEST_CASE("checkpoint round trip") {
  auto net = SchedulerNet::init(4, 5, 99);
  const auto j = to_checkpoint(net);
  CHECK(j.at("depth") == 4);
  CHECK(j.at("width") == 5);
  CHECK(j.at("seed") == 99);
  CHECK(j.at("layers").size() == 4);
  // row-major layout
  CHECK(j.at("layers")[0].at("data")[1].get<double>() == net.weights()[0](0, 1));
  const auto back = from_checkpoint(nlohmann::json::parse(j.dump()));
  for (std::size_t l = 0; l < 4; ++l) CHECK(back.weights()[l] == net.weights()[l]);
  CHECK(back.seed() == 99);

  auto broken = j;
  broken["layers"][1]["data"].erase(0);
  CHECK_THROWS_AS(from_checkpoint(broken), std::invalid_argument);
  broken = j;
  broken["depth"] = 3;
  CHECK_THROWS_AS(from_checkpoint(broken), std::invalid_argument);
}

TEST_CASE("single precision instantiation") {
  const auto net = SchedulerNet::init(3, 8, 4);
  const auto f = net.cast<float>();
  std::mt19937_64 rng(2);
  const auto h = random_feature(rng);
  CHECK(static_cast<double>(predict(f, h)) == doctest::Approx(predict(net, h)).epsilon(1e-4));
  const auto batch = random_batch(rng, 3);
  const auto stepped = sgd_update(f, batch, 1e-3);
  CHECK(stepped.all_finite());
}
