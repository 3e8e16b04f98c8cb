// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "sheetstream/evaluate.hpp"
#include "support.hpp"

using namespace sheetstream;
using namespace sstest;

namespace {

class MapContext : public EvalContext {
 public:
  std::map<CellAddr, Value> cells;

  Value cell(CellAddr addr) const override {
    auto it = cells.find(addr);
    return it == cells.end() ? Value() : it->second;
  }
  void visit_range(const RangeAddr& range, const RangeVisitor& visit) const override {
    for (const auto& [a, v] : cells)
      if (range.contains(a) && !v.is_blank()) visit(a, v);
  }
};

struct Fixture {
  MapContext ctx;
  Fixture() {
    ctx.cells[A("A1")] = num(1);
    ctx.cells[A("A2")] = num(2);
    ctx.cells[A("A3")] = txt("x");
    ctx.cells[A("A4")] = boolean(true);
    ctx.cells[A("B1")] = err(ErrorCode::NA);
    ctx.cells[A("C1")] = Value::window(WindowRef{1, {3, 6.0, 1.0, 3.0}});
    ctx.cells[A("C2")] = Value::window(WindowRef{2, {}});
    ctx.cells[A("D1")] = num(10);
    ctx.cells[A("D2")] = num(-4);
  }
  Value eval(const char* text) const { return evaluate_formula(parse_formula(text), ctx); }
};

}  // namespace

TEST_CASE_FIXTURE(Fixture, "arithmetic") {
  CHECK(eval("=1+2*3") == num(7));
  CHECK(eval("=-3^2") == num(-9));
  CHECK(eval("=2^3^2") == num(512));
  CHECK(eval("=7/2") == num(3.5));
  CHECK(eval("=1/0") == err(ErrorCode::Div0));
  CHECK(eval("=Z99+1") == num(1));
  CHECK(eval("=A4+1") == num(2));
  CHECK(eval("=A3+1") == err(ErrorCode::Value));
  CHECK(eval("=10^400") == err(ErrorCode::Value));
  CHECK(eval("=(-8)^(1/3)") == err(ErrorCode::Value));
  CHECK(eval("=ABS(D2)") == num(4));
  CHECK(eval("=-A3") == err(ErrorCode::Value));
}

TEST_CASE_FIXTURE(Fixture, "errors propagate leftmost first") {
  CHECK(eval("=B1+1/0") == err(ErrorCode::NA));
  CHECK(eval("=1/0+B1") == err(ErrorCode::Div0));
  CHECK(eval("=SUM(A1,B1)") == err(ErrorCode::NA));
  CHECK(eval("=IF(B1,1,2)") == err(ErrorCode::NA));
  CHECK(eval("=IF(TRUE,1,B1)") == num(1));
  CHECK(eval("=AND(B1,1/0)") == err(ErrorCode::NA));
}

TEST_CASE_FIXTURE(Fixture, "comparisons") {
  CHECK(eval("=1<2") == boolean(true));
  CHECK(eval("=\"a\"=\"A\"") == boolean(false));
  CHECK(eval("=\"a\"<\"b\"") == boolean(true));
  CHECK(eval("=1<\"a\"") == boolean(true));
  CHECK(eval("=\"a\"<TRUE") == boolean(true));
  CHECK(eval("=FALSE<TRUE") == boolean(true));
  CHECK(eval("=Z9=0") == boolean(true));
  CHECK(eval("=Z9=\"\"") == boolean(true));
  CHECK(eval("=Z9=FALSE") == boolean(true));
  CHECK(eval("=Z9<>1") == boolean(true));
  CHECK(eval("=2>=2") == boolean(true));
}

TEST_CASE_FIXTURE(Fixture, "logic") {
  CHECK(eval("=IF(0,1,2)") == num(2));
  CHECK(eval("=IF(Z1,1,2)") == num(2));
  CHECK(eval("=IF(FALSE,1)") == boolean(false));
  CHECK(eval("=IF(\"x\",1,2)") == err(ErrorCode::Value));
  CHECK(eval("=AND(1,TRUE)") == boolean(true));
  CHECK(eval("=OR(0,FALSE)") == boolean(false));
  CHECK(eval("=NOT(0)") == boolean(true));
  CHECK(eval("=NOT(A3)") == err(ErrorCode::Value));
}

TEST_CASE_FIXTURE(Fixture, "aggregators") {
  CHECK(eval("=SUM(A1:A4)") == num(3));
  CHECK(eval("=COUNT(A1:A4)") == num(2));
  CHECK(eval("=AVERAGE(A1:A4)") == num(1.5));
  CHECK(eval("=MIN(A1:A4,D2)") == num(-4));
  CHECK(eval("=MAX(A1:A4,D1)") == num(10));
  CHECK(eval("=SUM(Z1:Z9)") == num(0));
  CHECK(eval("=MIN(Z1:Z9)") == num(0));
  CHECK(eval("=MAX(Z1:Z9)") == num(0));
  CHECK(eval("=AVERAGE(Z1:Z9)") == err(ErrorCode::Div0));
  CHECK(eval("=SUM(\"x\")") == err(ErrorCode::Value));
  CHECK(eval("=COUNT(\"x\",1)") == num(1));
  CHECK(eval("=SUM(TRUE,1)") == num(2));
  CHECK(eval("=SUM(A1:B1)") == err(ErrorCode::NA));
}

TEST_CASE_FIXTURE(Fixture, "aggregators read windows") {
  CHECK(eval("=SUM(C1)") == num(6));
  CHECK(eval("=COUNT(C1)") == num(3));
  CHECK(eval("=AVERAGE(C1)") == num(2));
  CHECK(eval("=MIN(C1)") == num(1));
  CHECK(eval("=MAX(C1)") == num(3));
  CHECK(eval("=SUM(C1,A1:A2)") == num(9));
  CHECK(eval("=MAX(C1:C2)") == num(3));
  CHECK(eval("=MIN(C1:C2,D2)") == num(-4));
  CHECK(eval("=SUM(C2)") == num(0));
  CHECK(eval("=COUNT(C2)") == num(0));
  CHECK(eval("=MIN(C2)") == num(0));
  CHECK(eval("=MAX(C2)") == num(0));
  CHECK(eval("=AVERAGE(C2)") == err(ErrorCode::Div0));
}

TEST_CASE_FIXTURE(Fixture, "windows anywhere else are #VALUE!") {
  for (const char* f : {"=C1", "=C1+1", "=-C1", "=C1=C1", "=IF(C1,1,2)", "=IF(TRUE,C1,2)", "=AND(C1)", "=OR(C1)",
                        "=NOT(C1)", "=ABS(C1)", "=MATCH(C1,A1:A4)", "=MATCH(1,C1:C2)", "=C2^2"}) {
    CAPTURE(f);
    CHECK(eval(f) == err(ErrorCode::Value));
  }
}

TEST_CASE_FIXTURE(Fixture, "match") {
  CHECK(eval("=MATCH(2,A1:A4)") == num(2));
  CHECK(eval("=MATCH(\"x\",A1:A4)") == num(3));
  CHECK(eval("=MATCH(\"X\",A1:A4)") == err(ErrorCode::NA));
  CHECK(eval("=MATCH(TRUE,A1:A4)") == num(4));
  CHECK(eval("=MATCH(-4,D1:D2)") == num(2));
  CHECK(eval("=MATCH(10,A1:D1)") == err(ErrorCode::NA));  // B1 is #N/A and propagates
  CHECK(eval("=MATCH(Z9,A1:A4)") == err(ErrorCode::NA));
  CHECK(eval("=MATCH(1,A1)") == num(1));
}
