#pragma once

#include <filesystem>
#include <string>

#include "tacoord/case_io.hpp"
#include "tacoord/netmodel.hpp"

namespace fixtures {

inline std::filesystem::path data_dir() { return TACOORD_DATA_DIR; }

inline tacoord::SystemCase desk_case() { return tacoord::load_case(data_dir() / "two_area.json"); }

inline tacoord::Ibr idle_ibr(int bus) {
  tacoord::Ibr ibr;
  ibr.bus = bus;
  ibr.p_ref = 0.0;
  ibr.dc.gain = 0.0;
  return ibr;
}

// Slack bus 1 (1.0 pu) feeding a PQ load at bus 2 through x = 0.1.
inline tacoord::SystemCase two_bus(double load_p = 1.0, double load_q = 0.0) {
  using namespace tacoord;
  SystemCase c;
  c.name = "two_bus";
  c.buses = {{1, BusType::Slack, 1.0}, {2, BusType::PQ, 1.0}};
  c.lines = {{1, 1, 2, 0.0, 0.1, 0.0}};
  c.generators = {{1, 5.0, 1.0, 0.2, 0.0, 1.0}};
  if (load_p != 0.0 || load_q != 0.0) c.loads = {{2, load_p, load_q}};
  c.ibrs = {idle_ibr(2)};
  c.feature_lines = {1};
  return c;
}

// Machine 1 (PV) - bus 3 - machine 2 (slack), both halves x = 0.15, lossless,
// no shunts. Machine 2 is stiff so the pair behaves like SMIB.
inline tacoord::SystemCase smib(double pm = 0.8) {
  using namespace tacoord;
  SystemCase c;
  c.name = "smib";
  c.buses = {{1, BusType::PV, 1.0}, {2, BusType::Slack, 1.0}, {3, BusType::PQ, 1.0}};
  c.lines = {{1, 1, 3, 0.0, 0.15, 0.0}, {2, 3, 2, 0.0, 0.15, 0.0}};
  c.generators = {{1, 4.0, 2.0, 0.25, pm, 1.0}, {2, 1e4, 0.0, 0.01, 0.0, 1.0}};
  c.ibrs = {idle_ibr(3)};
  c.ibrs[0].dc.input_generator = 0;
  c.feature_lines = {1, 2};
  c.reference_generator = 1;
  return c;
}

// Three machines on a ring with loads at every bus and one IBR.
inline tacoord::SystemCase three_machine() {
  using namespace tacoord;
  SystemCase c;
  c.name = "three_machine";
  c.buses = {{1, BusType::Slack, 1.04}, {2, BusType::PV, 1.02}, {3, BusType::PV, 1.01},
             {4, BusType::PQ, 1.0},     {5, BusType::PQ, 1.0},  {6, BusType::PQ, 1.0}};
  c.lines = {{1, 1, 4, 0.0, 0.06, 0.0},   {2, 2, 5, 0.0, 0.06, 0.0},   {3, 3, 6, 0.0, 0.06, 0.0},
             {4, 4, 5, 0.01, 0.08, 0.02}, {5, 5, 6, 0.01, 0.1, 0.02},  {6, 6, 4, 0.012, 0.09, 0.02}};
  c.generators = {{1, 6.0, 2.0, 0.08, 0.0, 1.0}, {2, 4.0, 2.0, 0.1, 1.2, 1.0}, {3, 3.0, 2.0, 0.12, 0.8, 1.0}};
  c.loads = {{4, 1.0, 0.3}, {5, 1.2, 0.4}, {6, 0.9, 0.2}};
  Ibr ibr = idle_ibr(5);
  ibr.p_ref = 0.2;
  ibr.dc.gain = -20.0;
  ibr.dc.t1 = 0.2;
  ibr.dc.input_generator = 1;
  c.ibrs = {ibr};
  c.feature_lines = {4, 5, 6};
  return c;
}

}  // namespace fixtures
