#include <doctest.h>

#include <sstream>

#include "panelctrl/error.hpp"
#include "panelctrl/io.hpp"
#include "panelctrl/panel.hpp"

using namespace panelctrl;

namespace {

const char* kSmall =
    "unit,time,outcome\n"
    "KS,1,1\nKS,2,2\nKS,3,3.5\nKS,4,4\n"
    "MO,1,0.5\nMO,2,1.5\nMO,3,2.5\nMO,4,3.5\n"
    "NE,1,1.5\nNE,2,2.5\nNE,3,3\nNE,4,4.5\n";

PanelData load(const std::string& text, const std::string& treated = "KS",
               const std::string& when = "3") {
  std::istringstream in(text);
  return load_panel(in, treated, when);
}

ErrorCode code_of(const std::string& text, const std::string& treated = "KS",
                  const std::string& when = "3") {
  try {
    load(text, treated, when);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::invalid_argument;  // no error is a test failure below
}

}  // namespace

TEST_CASE("load a small panel") {
  const PanelData p = load(kSmall);
  CHECK(p.n_units() == 3);
  CHECK(p.n_periods() == 4);
  CHECK(p.t0 == 2);
  CHECK(p.unit_ids[p.treated_index] == "KS");
  CHECK(p.outcomes(p.treated_index, 2) == 3.5);
  CHECK(p.n_controls() == 2);
}

TEST_CASE("row order does not matter and times sort numerically") {
  const std::string shuffled =
      "time,outcome,unit\n"
      "10,4.0,KS\n9,3.5,KS\n2,2.0,KS\n1,1.0,KS\n"
      "1,0.5,MO\n10,3.5,MO\n9,2.5,MO\n2,1.5,MO\n"
      "9,3.0,NE\n10,4.5,NE\n1,1.5,NE\n2,2.5,NE\n";
  const PanelData p = load(shuffled, "KS", "9");
  CHECK(p.time_ids == std::vector<std::string>{"1", "2", "9", "10"});
  CHECK(p.t0 == 2);
  CHECK(p.outcomes(p.treated_index, 3) == 4.0);
}

TEST_CASE("distinct rejections") {
  std::string dup = kSmall;
  dup += "MO,2,9.9\n";
  CHECK(code_of(dup) == ErrorCode::duplicate_cell);

  std::string missing = kSmall;
  missing.erase(missing.find("NE,3,3\n"), 7);
  try {
    load(missing);
    FAIL("expected missing cell");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::missing_cell);
    const std::string msg = e.what();
    CHECK(msg.find("NE") != std::string::npos);
    CHECK(msg.find("3") != std::string::npos);
  }

  CHECK(code_of(kSmall, "TX") == ErrorCode::unknown_treated);
  CHECK(code_of(kSmall, "KS", "1") == ErrorCode::treatment_time);
  CHECK(code_of(kSmall, "KS", "0") == ErrorCode::treatment_time);
  CHECK(code_of(kSmall, "KS", "5") == ErrorCode::treatment_time);
  CHECK(code_of(kSmall, "KS", "2") == ErrorCode::too_few_periods);
  CHECK(code_of("unit,time\nA,1\n") == ErrorCode::parse);
  CHECK(code_of("unit,time,outcome\nKS,1,abc\n") == ErrorCode::parse);
}

TEST_CASE("application scale") {
  std::ostringstream os;
  os << "unit,time,outcome\n";
  for (int i = 0; i < 51; ++i)
    for (int t = 1; t <= 105; ++t) os << "S" << i << ',' << t << ',' << (i * 0.01 + t * 0.1) << '\n';
  const PanelData p = load(os.str(), "S7", "90");
  CHECK(p.t0 == 89);
  CHECK(p.n_controls() == 50);
  CHECK(p.n_periods() == 105);
}

TEST_CASE("long-format round trip") {
  const PanelData p = load(kSmall);
  std::ostringstream out;
  write_long_csv(out, p);
  CHECK(out.str() == kSmall);
  const PanelData q = load(out.str());
  CHECK(q.outcomes == p.outcomes);

  const auto m = panel_manifest(p);
  CHECK(m["t0"] == 2);
  CHECK(m["unit_ids"].size() == 3);
}

TEST_CASE("split and center") {
  Eigen::MatrixXd x0(2, 2);
  x0 << 1, 3, 3, 5;
  const Eigen::Vector2d x1(2, 2);
  const PanelBlocks c = make_blocks(x1, x0, Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Ones(2, 1), true);
  Eigen::MatrixXd want(2, 2);
  want << -1, -1, 1, 1;
  CHECK(c.x0 == want);
  CHECK(c.centering == Eigen::Vector2d(2, 4));
  CHECK(c.x1 == Eigen::Vector2d(0, -2));
  CHECK(c.y0_post == Eigen::MatrixXd::Ones(2, 1));
  CHECK((uncenter(c).x0 - x0).cwiseAbs().maxCoeff() < 1e-14);

  const PanelBlocks raw = make_blocks(x1, x0, Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Ones(2, 1), false);
  CHECK(raw.centering == Eigen::Vector2d::Zero());
  CHECK_FALSE(raw.centered);
}

TEST_CASE("blocks reconstruct the panel") {
  const PanelData p = load(kSmall);
  const PanelBlocks b = split_and_center(p, true);
  CHECK(b.x0.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
  const PanelBlocks u = uncenter(b);
  const auto ctrl = p.control_indices();
  for (Eigen::Index t = 0; t < p.t0; ++t) {
    CHECK(u.x1[t] == doctest::Approx(p.outcomes(p.treated_index, t)));
    for (std::size_t i = 0; i < ctrl.size(); ++i)
      CHECK(u.x0(Eigen::Index(i), t) == doctest::Approx(p.outcomes(ctrl[i], t)));
  }
  for (Eigen::Index k = 0; k < p.n_post(); ++k) {
    CHECK(b.y1_post[k] == p.outcomes(p.treated_index, p.t0 + k));
    for (std::size_t i = 0; i < ctrl.size(); ++i)
      CHECK(b.y0_post(Eigen::Index(i), k) == p.outcomes(ctrl[i], p.t0 + k));
  }
}

TEST_CASE("covariates are pre-period means") {
  const std::string text =
      "unit,time,outcome,pop\n"
      "A,1,1,10\nA,2,2,20\nA,3,3,99\n"
      "B,1,1,1\nB,2,2,NA\nB,3,3,5\n"
      "C,1,1,4\nC,2,2,6\nC,3,3,7\n";
  std::istringstream in(text);
  const std::vector<std::string> cols{"pop"};
  const PanelData p = load_panel(in, "A", "3", cols);
  REQUIRE(p.covariates.cols() == 1);
  CHECK(p.covariates(0, 0) == 15.0);
  CHECK(p.covariates(1, 0) == 1.0);
  CHECK(p.covariates(2, 0) == 5.0);
}

TEST_CASE("number formatting round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 12345.678, 1e22}) {
    double back = 0.0;
    REQUIRE(io::parse_double(io::format_double(v), back));
    CHECK(back == v);
  }
  CHECK(io::format_double(-0.0) == "0");
  CHECK(io::split_csv_line("a, \"b,c\" ,d") == std::vector<std::string>{"a", "b,c", "d"});
}
