#include "lpsurf/meshing.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_map>

#include <Eigen/Eigenvalues>

namespace lpsurf {

namespace {

// Cube corners (0..3 counter-clockwise in the bottom layer, 4..7 above) and edges.
constexpr std::array<std::array<int, 3>, 8> kCorner{{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}};

constexpr std::array<std::array<int, 2>, 12> kEdge{{
    {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6}, {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}}};

// Triangles per corner configuration (bit c set when corner c is below the iso value).
constexpr int kTriangles[256][16] = {
    {-1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 8, 3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 1, 9, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 8, 3, 9, 8, 1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 2, 10, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 8, 3, 1, 2, 10, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {9, 2, 10, 0, 2, 9, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {2, 8, 3, 2, 10, 8, 10, 9, 8, -1, -1, -1, -1, -1, -1, -1},
    {3, 11, 2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 11, 2, 8, 11, 0, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 9, 0, 2, 3, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 11, 2, 1, 9, 11, 9, 8, 11, -1, -1, -1, -1, -1, -1, -1},
    {3, 10, 1, 11, 10, 3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 10, 1, 0, 8, 10, 8, 11, 10, -1, -1, -1, -1, -1, -1, -1},
    {3, 9, 0, 3, 11, 9, 11, 10, 9, -1, -1, -1, -1, -1, -1, -1},
    {9, 8, 10, 10, 8, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {4, 7, 8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {4, 3, 0, 7, 3, 4, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 1, 9, 8, 4, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {4, 1, 9, 4, 7, 1, 7, 3, 1, -1, -1, -1, -1, -1, -1, -1},
    {1, 2, 10, 8, 4, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {3, 4, 7, 3, 0, 4, 1, 2, 10, -1, -1, -1, -1, -1, -1, -1},
    {9, 2, 10, 9, 0, 2, 8, 4, 7, -1, -1, -1, -1, -1, -1, -1},
    {2, 10, 9, 2, 9, 7, 2, 7, 3, 7, 9, 4, -1, -1, -1, -1},
    {8, 4, 7, 3, 11, 2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {11, 4, 7, 11, 2, 4, 2, 0, 4, -1, -1, -1, -1, -1, -1, -1},
    {9, 0, 1, 8, 4, 7, 2, 3, 11, -1, -1, -1, -1, -1, -1, -1},
    {4, 7, 11, 9, 4, 11, 9, 11, 2, 9, 2, 1, -1, -1, -1, -1},
    {3, 10, 1, 3, 11, 10, 7, 8, 4, -1, -1, -1, -1, -1, -1, -1},
    {1, 11, 10, 1, 4, 11, 1, 0, 4, 7, 11, 4, -1, -1, -1, -1},
    {4, 7, 8, 9, 0, 11, 9, 11, 10, 11, 0, 3, -1, -1, -1, -1},
    {4, 7, 11, 4, 11, 9, 9, 11, 10, -1, -1, -1, -1, -1, -1, -1},
    {9, 5, 4, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {9, 5, 4, 0, 8, 3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 5, 4, 1, 5, 0, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {8, 5, 4, 8, 3, 5, 3, 1, 5, -1, -1, -1, -1, -1, -1, -1},
    {1, 2, 10, 9, 5, 4, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {3, 0, 8, 1, 2, 10, 4, 9, 5, -1, -1, -1, -1, -1, -1, -1},
    {5, 2, 10, 5, 4, 2, 4, 0, 2, -1, -1, -1, -1, -1, -1, -1},
    {2, 10, 5, 3, 2, 5, 3, 5, 4, 3, 4, 8, -1, -1, -1, -1},
    {9, 5, 4, 2, 3, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 11, 2, 0, 8, 11, 4, 9, 5, -1, -1, -1, -1, -1, -1, -1},
    {0, 5, 4, 0, 1, 5, 2, 3, 11, -1, -1, -1, -1, -1, -1, -1},
    {2, 1, 5, 2, 5, 8, 2, 8, 11, 4, 8, 5, -1, -1, -1, -1},
    {10, 3, 11, 10, 1, 3, 9, 5, 4, -1, -1, -1, -1, -1, -1, -1},
    {4, 9, 5, 0, 8, 1, 8, 10, 1, 8, 11, 10, -1, -1, -1, -1},
    {5, 4, 0, 5, 0, 11, 5, 11, 10, 11, 0, 3, -1, -1, -1, -1},
    {5, 4, 8, 5, 8, 10, 10, 8, 11, -1, -1, -1, -1, -1, -1, -1},
    {9, 7, 8, 5, 7, 9, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {9, 3, 0, 9, 5, 3, 5, 7, 3, -1, -1, -1, -1, -1, -1, -1},
    {0, 7, 8, 0, 1, 7, 1, 5, 7, -1, -1, -1, -1, -1, -1, -1},
    {1, 5, 3, 3, 5, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {9, 7, 8, 9, 5, 7, 10, 1, 2, -1, -1, -1, -1, -1, -1, -1},
    {10, 1, 2, 9, 5, 0, 5, 3, 0, 5, 7, 3, -1, -1, -1, -1},
    {8, 0, 2, 8, 2, 5, 8, 5, 7, 10, 5, 2, -1, -1, -1, -1},
    {2, 10, 5, 2, 5, 3, 3, 5, 7, -1, -1, -1, -1, -1, -1, -1},
    {7, 9, 5, 7, 8, 9, 3, 11, 2, -1, -1, -1, -1, -1, -1, -1},
    {9, 5, 7, 9, 7, 2, 9, 2, 0, 2, 7, 11, -1, -1, -1, -1},
    {2, 3, 11, 0, 1, 8, 1, 7, 8, 1, 5, 7, -1, -1, -1, -1},
    {11, 2, 1, 11, 1, 7, 7, 1, 5, -1, -1, -1, -1, -1, -1, -1},
    {9, 5, 8, 8, 5, 7, 10, 1, 3, 10, 3, 11, -1, -1, -1, -1},
    {5, 7, 0, 5, 0, 9, 7, 11, 0, 1, 0, 10, 11, 10, 0, -1},
    {11, 10, 0, 11, 0, 3, 10, 5, 0, 8, 0, 7, 5, 7, 0, -1},
    {11, 10, 5, 7, 11, 5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {10, 6, 5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 8, 3, 5, 10, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {9, 0, 1, 5, 10, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 8, 3, 1, 9, 8, 5, 10, 6, -1, -1, -1, -1, -1, -1, -1},
    {1, 6, 5, 2, 6, 1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 6, 5, 1, 2, 6, 3, 0, 8, -1, -1, -1, -1, -1, -1, -1},
    {9, 6, 5, 9, 0, 6, 0, 2, 6, -1, -1, -1, -1, -1, -1, -1},
    {5, 9, 8, 5, 8, 2, 5, 2, 6, 3, 2, 8, -1, -1, -1, -1},
    {2, 3, 11, 10, 6, 5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {11, 0, 8, 11, 2, 0, 10, 6, 5, -1, -1, -1, -1, -1, -1, -1},
    {0, 1, 9, 2, 3, 11, 5, 10, 6, -1, -1, -1, -1, -1, -1, -1},
    {5, 10, 6, 1, 9, 2, 9, 11, 2, 9, 8, 11, -1, -1, -1, -1},
    {6, 3, 11, 6, 5, 3, 5, 1, 3, -1, -1, -1, -1, -1, -1, -1},
    {0, 8, 11, 0, 11, 5, 0, 5, 1, 5, 11, 6, -1, -1, -1, -1},
    {3, 11, 6, 0, 3, 6, 0, 6, 5, 0, 5, 9, -1, -1, -1, -1},
    {6, 5, 9, 6, 9, 11, 11, 9, 8, -1, -1, -1, -1, -1, -1, -1},
    {5, 10, 6, 4, 7, 8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {4, 3, 0, 4, 7, 3, 6, 5, 10, -1, -1, -1, -1, -1, -1, -1},
    {1, 9, 0, 5, 10, 6, 8, 4, 7, -1, -1, -1, -1, -1, -1, -1},
    {10, 6, 5, 1, 9, 7, 1, 7, 3, 7, 9, 4, -1, -1, -1, -1},
    {6, 1, 2, 6, 5, 1, 4, 7, 8, -1, -1, -1, -1, -1, -1, -1},
    {1, 2, 5, 5, 2, 6, 3, 0, 4, 3, 4, 7, -1, -1, -1, -1},
    {8, 4, 7, 9, 0, 5, 0, 6, 5, 0, 2, 6, -1, -1, -1, -1},
    {7, 3, 9, 7, 9, 4, 3, 2, 9, 5, 9, 6, 2, 6, 9, -1},
    {3, 11, 2, 7, 8, 4, 10, 6, 5, -1, -1, -1, -1, -1, -1, -1},
    {5, 10, 6, 4, 7, 2, 4, 2, 0, 2, 7, 11, -1, -1, -1, -1},
    {0, 1, 9, 4, 7, 8, 2, 3, 11, 5, 10, 6, -1, -1, -1, -1},
    {9, 2, 1, 9, 11, 2, 9, 4, 11, 7, 11, 4, 5, 10, 6, -1},
    {8, 4, 7, 3, 11, 5, 3, 5, 1, 5, 11, 6, -1, -1, -1, -1},
    {5, 1, 11, 5, 11, 6, 1, 0, 11, 7, 11, 4, 0, 4, 11, -1},
    {0, 5, 9, 0, 6, 5, 0, 3, 6, 11, 6, 3, 8, 4, 7, -1},
    {6, 5, 9, 6, 9, 11, 4, 7, 9, 7, 11, 9, -1, -1, -1, -1},
    {10, 4, 9, 6, 4, 10, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {4, 10, 6, 4, 9, 10, 0, 8, 3, -1, -1, -1, -1, -1, -1, -1},
    {10, 0, 1, 10, 6, 0, 6, 4, 0, -1, -1, -1, -1, -1, -1, -1},
    {8, 3, 1, 8, 1, 6, 8, 6, 4, 6, 1, 10, -1, -1, -1, -1},
    {1, 4, 9, 1, 2, 4, 2, 6, 4, -1, -1, -1, -1, -1, -1, -1},
    {3, 0, 8, 1, 2, 9, 2, 4, 9, 2, 6, 4, -1, -1, -1, -1},
    {0, 2, 4, 4, 2, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {8, 3, 2, 8, 2, 4, 4, 2, 6, -1, -1, -1, -1, -1, -1, -1},
    {10, 4, 9, 10, 6, 4, 11, 2, 3, -1, -1, -1, -1, -1, -1, -1},
    {0, 8, 2, 2, 8, 11, 4, 9, 10, 4, 10, 6, -1, -1, -1, -1},
    {3, 11, 2, 0, 1, 6, 0, 6, 4, 6, 1, 10, -1, -1, -1, -1},
    {6, 4, 1, 6, 1, 10, 4, 8, 1, 2, 1, 11, 8, 11, 1, -1},
    {9, 6, 4, 9, 3, 6, 9, 1, 3, 11, 6, 3, -1, -1, -1, -1},
    {8, 11, 1, 8, 1, 0, 11, 6, 1, 9, 1, 4, 6, 4, 1, -1},
    {3, 11, 6, 3, 6, 0, 0, 6, 4, -1, -1, -1, -1, -1, -1, -1},
    {6, 4, 8, 11, 6, 8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {7, 10, 6, 7, 8, 10, 8, 9, 10, -1, -1, -1, -1, -1, -1, -1},
    {0, 7, 3, 0, 10, 7, 0, 9, 10, 6, 7, 10, -1, -1, -1, -1},
    {10, 6, 7, 1, 10, 7, 1, 7, 8, 1, 8, 0, -1, -1, -1, -1},
    {10, 6, 7, 10, 7, 1, 1, 7, 3, -1, -1, -1, -1, -1, -1, -1},
    {1, 2, 6, 1, 6, 8, 1, 8, 9, 8, 6, 7, -1, -1, -1, -1},
    {2, 6, 9, 2, 9, 1, 6, 7, 9, 0, 9, 3, 7, 3, 9, -1},
    {7, 8, 0, 7, 0, 6, 6, 0, 2, -1, -1, -1, -1, -1, -1, -1},
    {7, 3, 2, 6, 7, 2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {2, 3, 11, 10, 6, 8, 10, 8, 9, 8, 6, 7, -1, -1, -1, -1},
    {2, 0, 7, 2, 7, 11, 0, 9, 7, 6, 7, 10, 9, 10, 7, -1},
    {1, 8, 0, 1, 7, 8, 1, 10, 7, 6, 7, 10, 2, 3, 11, -1},
    {11, 2, 1, 11, 1, 7, 10, 6, 1, 6, 7, 1, -1, -1, -1, -1},
    {8, 9, 6, 8, 6, 7, 9, 1, 6, 11, 6, 3, 1, 3, 6, -1},
    {0, 9, 1, 11, 6, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {7, 8, 0, 7, 0, 6, 3, 11, 0, 11, 6, 0, -1, -1, -1, -1},
    {7, 11, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {7, 6, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {3, 0, 8, 11, 7, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 1, 9, 11, 7, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {8, 1, 9, 8, 3, 1, 11, 7, 6, -1, -1, -1, -1, -1, -1, -1},
    {10, 1, 2, 6, 11, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 2, 10, 3, 0, 8, 6, 11, 7, -1, -1, -1, -1, -1, -1, -1},
    {2, 9, 0, 2, 10, 9, 6, 11, 7, -1, -1, -1, -1, -1, -1, -1},
    {6, 11, 7, 2, 10, 3, 10, 8, 3, 10, 9, 8, -1, -1, -1, -1},
    {7, 2, 3, 6, 2, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {7, 0, 8, 7, 6, 0, 6, 2, 0, -1, -1, -1, -1, -1, -1, -1},
    {2, 7, 6, 2, 3, 7, 0, 1, 9, -1, -1, -1, -1, -1, -1, -1},
    {1, 6, 2, 1, 8, 6, 1, 9, 8, 8, 7, 6, -1, -1, -1, -1},
    {10, 7, 6, 10, 1, 7, 1, 3, 7, -1, -1, -1, -1, -1, -1, -1},
    {10, 7, 6, 1, 7, 10, 1, 8, 7, 1, 0, 8, -1, -1, -1, -1},
    {0, 3, 7, 0, 7, 10, 0, 10, 9, 6, 10, 7, -1, -1, -1, -1},
    {7, 6, 10, 7, 10, 8, 8, 10, 9, -1, -1, -1, -1, -1, -1, -1},
    {6, 8, 4, 11, 8, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {3, 6, 11, 3, 0, 6, 0, 4, 6, -1, -1, -1, -1, -1, -1, -1},
    {8, 6, 11, 8, 4, 6, 9, 0, 1, -1, -1, -1, -1, -1, -1, -1},
    {9, 4, 6, 9, 6, 3, 9, 3, 1, 11, 3, 6, -1, -1, -1, -1},
    {6, 8, 4, 6, 11, 8, 2, 10, 1, -1, -1, -1, -1, -1, -1, -1},
    {1, 2, 10, 3, 0, 11, 0, 6, 11, 0, 4, 6, -1, -1, -1, -1},
    {4, 11, 8, 4, 6, 11, 0, 2, 9, 2, 10, 9, -1, -1, -1, -1},
    {10, 9, 3, 10, 3, 2, 9, 4, 3, 11, 3, 6, 4, 6, 3, -1},
    {8, 2, 3, 8, 4, 2, 4, 6, 2, -1, -1, -1, -1, -1, -1, -1},
    {0, 4, 2, 4, 6, 2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 9, 0, 2, 3, 4, 2, 4, 6, 4, 3, 8, -1, -1, -1, -1},
    {1, 9, 4, 1, 4, 2, 2, 4, 6, -1, -1, -1, -1, -1, -1, -1},
    {8, 1, 3, 8, 6, 1, 8, 4, 6, 6, 10, 1, -1, -1, -1, -1},
    {10, 1, 0, 10, 0, 6, 6, 0, 4, -1, -1, -1, -1, -1, -1, -1},
    {4, 6, 3, 4, 3, 8, 6, 10, 3, 0, 3, 9, 10, 9, 3, -1},
    {10, 9, 4, 6, 10, 4, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {4, 9, 5, 7, 6, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 8, 3, 4, 9, 5, 11, 7, 6, -1, -1, -1, -1, -1, -1, -1},
    {5, 0, 1, 5, 4, 0, 7, 6, 11, -1, -1, -1, -1, -1, -1, -1},
    {11, 7, 6, 8, 3, 4, 3, 5, 4, 3, 1, 5, -1, -1, -1, -1},
    {9, 5, 4, 10, 1, 2, 7, 6, 11, -1, -1, -1, -1, -1, -1, -1},
    {6, 11, 7, 1, 2, 10, 0, 8, 3, 4, 9, 5, -1, -1, -1, -1},
    {7, 6, 11, 5, 4, 10, 4, 2, 10, 4, 0, 2, -1, -1, -1, -1},
    {3, 4, 8, 3, 5, 4, 3, 2, 5, 10, 5, 2, 11, 7, 6, -1},
    {7, 2, 3, 7, 6, 2, 5, 4, 9, -1, -1, -1, -1, -1, -1, -1},
    {9, 5, 4, 0, 8, 6, 0, 6, 2, 6, 8, 7, -1, -1, -1, -1},
    {3, 6, 2, 3, 7, 6, 1, 5, 0, 5, 4, 0, -1, -1, -1, -1},
    {6, 2, 8, 6, 8, 7, 2, 1, 8, 4, 8, 5, 1, 5, 8, -1},
    {9, 5, 4, 10, 1, 6, 1, 7, 6, 1, 3, 7, -1, -1, -1, -1},
    {1, 6, 10, 1, 7, 6, 1, 0, 7, 8, 7, 0, 9, 5, 4, -1},
    {4, 0, 10, 4, 10, 5, 0, 3, 10, 6, 10, 7, 3, 7, 10, -1},
    {7, 6, 10, 7, 10, 8, 5, 4, 10, 4, 8, 10, -1, -1, -1, -1},
    {6, 9, 5, 6, 11, 9, 11, 8, 9, -1, -1, -1, -1, -1, -1, -1},
    {3, 6, 11, 0, 6, 3, 0, 5, 6, 0, 9, 5, -1, -1, -1, -1},
    {0, 11, 8, 0, 5, 11, 0, 1, 5, 5, 6, 11, -1, -1, -1, -1},
    {6, 11, 3, 6, 3, 5, 5, 3, 1, -1, -1, -1, -1, -1, -1, -1},
    {1, 2, 10, 9, 5, 11, 9, 11, 8, 11, 5, 6, -1, -1, -1, -1},
    {0, 11, 3, 0, 6, 11, 0, 9, 6, 5, 6, 9, 1, 2, 10, -1},
    {11, 8, 5, 11, 5, 6, 8, 0, 5, 10, 5, 2, 0, 2, 5, -1},
    {6, 11, 3, 6, 3, 5, 2, 10, 3, 10, 5, 3, -1, -1, -1, -1},
    {5, 8, 9, 5, 2, 8, 5, 6, 2, 3, 8, 2, -1, -1, -1, -1},
    {9, 5, 6, 9, 6, 0, 0, 6, 2, -1, -1, -1, -1, -1, -1, -1},
    {1, 5, 8, 1, 8, 0, 5, 6, 8, 3, 8, 2, 6, 2, 8, -1},
    {1, 5, 6, 2, 1, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 3, 6, 1, 6, 10, 3, 8, 6, 5, 6, 9, 8, 9, 6, -1},
    {10, 1, 0, 10, 0, 6, 9, 5, 0, 5, 6, 0, -1, -1, -1, -1},
    {0, 3, 8, 5, 6, 10, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {10, 5, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {11, 5, 10, 7, 5, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {11, 5, 10, 11, 7, 5, 8, 3, 0, -1, -1, -1, -1, -1, -1, -1},
    {5, 11, 7, 5, 10, 11, 1, 9, 0, -1, -1, -1, -1, -1, -1, -1},
    {10, 7, 5, 10, 11, 7, 9, 8, 1, 8, 3, 1, -1, -1, -1, -1},
    {11, 1, 2, 11, 7, 1, 7, 5, 1, -1, -1, -1, -1, -1, -1, -1},
    {0, 8, 3, 1, 2, 7, 1, 7, 5, 7, 2, 11, -1, -1, -1, -1},
    {9, 7, 5, 9, 2, 7, 9, 0, 2, 2, 11, 7, -1, -1, -1, -1},
    {7, 5, 2, 7, 2, 11, 5, 9, 2, 3, 2, 8, 9, 8, 2, -1},
    {2, 5, 10, 2, 3, 5, 3, 7, 5, -1, -1, -1, -1, -1, -1, -1},
    {8, 2, 0, 8, 5, 2, 8, 7, 5, 10, 2, 5, -1, -1, -1, -1},
    {9, 0, 1, 5, 10, 3, 5, 3, 7, 3, 10, 2, -1, -1, -1, -1},
    {9, 8, 2, 9, 2, 1, 8, 7, 2, 10, 2, 5, 7, 5, 2, -1},
    {1, 3, 5, 3, 7, 5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 8, 7, 0, 7, 1, 1, 7, 5, -1, -1, -1, -1, -1, -1, -1},
    {9, 0, 3, 9, 3, 5, 5, 3, 7, -1, -1, -1, -1, -1, -1, -1},
    {9, 8, 7, 5, 9, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {5, 8, 4, 5, 10, 8, 10, 11, 8, -1, -1, -1, -1, -1, -1, -1},
    {5, 0, 4, 5, 11, 0, 5, 10, 11, 11, 3, 0, -1, -1, -1, -1},
    {0, 1, 9, 8, 4, 10, 8, 10, 11, 10, 4, 5, -1, -1, -1, -1},
    {10, 11, 4, 10, 4, 5, 11, 3, 4, 9, 4, 1, 3, 1, 4, -1},
    {2, 5, 1, 2, 8, 5, 2, 11, 8, 4, 5, 8, -1, -1, -1, -1},
    {0, 4, 11, 0, 11, 3, 4, 5, 11, 2, 11, 1, 5, 1, 11, -1},
    {0, 2, 5, 0, 5, 9, 2, 11, 5, 4, 5, 8, 11, 8, 5, -1},
    {9, 4, 5, 2, 11, 3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {2, 5, 10, 3, 5, 2, 3, 4, 5, 3, 8, 4, -1, -1, -1, -1},
    {5, 10, 2, 5, 2, 4, 4, 2, 0, -1, -1, -1, -1, -1, -1, -1},
    {3, 10, 2, 3, 5, 10, 3, 8, 5, 4, 5, 8, 0, 1, 9, -1},
    {5, 10, 2, 5, 2, 4, 1, 9, 2, 9, 4, 2, -1, -1, -1, -1},
    {8, 4, 5, 8, 5, 3, 3, 5, 1, -1, -1, -1, -1, -1, -1, -1},
    {0, 4, 5, 1, 0, 5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {8, 4, 5, 8, 5, 3, 9, 0, 5, 0, 3, 5, -1, -1, -1, -1},
    {9, 4, 5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {4, 11, 7, 4, 9, 11, 9, 10, 11, -1, -1, -1, -1, -1, -1, -1},
    {0, 8, 3, 4, 9, 7, 9, 11, 7, 9, 10, 11, -1, -1, -1, -1},
    {1, 10, 11, 1, 11, 4, 1, 4, 0, 7, 4, 11, -1, -1, -1, -1},
    {3, 1, 4, 3, 4, 8, 1, 10, 4, 7, 4, 11, 10, 11, 4, -1},
    {4, 11, 7, 9, 11, 4, 9, 2, 11, 9, 1, 2, -1, -1, -1, -1},
    {9, 7, 4, 9, 11, 7, 9, 1, 11, 2, 11, 1, 0, 8, 3, -1},
    {11, 7, 4, 11, 4, 2, 2, 4, 0, -1, -1, -1, -1, -1, -1, -1},
    {11, 7, 4, 11, 4, 2, 8, 3, 4, 3, 2, 4, -1, -1, -1, -1},
    {2, 9, 10, 2, 7, 9, 2, 3, 7, 7, 4, 9, -1, -1, -1, -1},
    {9, 10, 7, 9, 7, 4, 10, 2, 7, 8, 7, 0, 2, 0, 7, -1},
    {3, 7, 10, 3, 10, 2, 7, 4, 10, 1, 10, 0, 4, 0, 10, -1},
    {1, 10, 2, 8, 7, 4, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {4, 9, 1, 4, 1, 7, 7, 1, 3, -1, -1, -1, -1, -1, -1, -1},
    {4, 9, 1, 4, 1, 7, 0, 8, 1, 8, 7, 1, -1, -1, -1, -1},
    {4, 0, 3, 7, 4, 3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {4, 8, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {9, 10, 8, 10, 11, 8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {3, 0, 9, 3, 9, 11, 11, 9, 10, -1, -1, -1, -1, -1, -1, -1},
    {0, 1, 10, 0, 10, 8, 8, 10, 11, -1, -1, -1, -1, -1, -1, -1},
    {3, 1, 10, 11, 3, 10, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 2, 11, 1, 11, 9, 9, 11, 8, -1, -1, -1, -1, -1, -1, -1},
    {3, 0, 9, 3, 9, 11, 1, 2, 9, 2, 11, 9, -1, -1, -1, -1},
    {0, 2, 11, 8, 0, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {3, 2, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {2, 3, 8, 2, 8, 10, 10, 8, 9, -1, -1, -1, -1, -1, -1, -1},
    {9, 10, 2, 0, 9, 2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {2, 3, 8, 2, 8, 10, 0, 1, 8, 1, 10, 8, -1, -1, -1, -1},
    {1, 10, 2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {1, 3, 8, 9, 1, 8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 9, 1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {0, 3, 8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {-1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1}
};

}  // namespace

void ExtractionConfig::validate() const {
  if (resolution < 8) throw std::invalid_argument("extraction: resolution must be >= 8");
  if (!((bounds.hi.array() > bounds.lo.array()).all())) throw std::invalid_argument("extraction: degenerate bounds");
  if (!std::isfinite(iso)) throw std::invalid_argument("extraction: iso value must be finite");
}

Vec3 ScalarGrid::position(int i, int j, int k) const {
  const Vec3 step = bounds.extent() / resolution;
  return bounds.lo + Vec3(i * step.x(), j * step.y(), k * step.z());
}

TriangleMesh marching_cubes(const ScalarGrid& grid, double iso) {
  const int n = grid.resolution;
  const auto total = static_cast<std::size_t>(grid.side()) * grid.side() * grid.side();
  if (n < 1 || grid.values.size() != total || (!grid.known.empty() && grid.known.size() != total))
    throw std::invalid_argument("marching_cubes: grid size mismatch");
  TriangleMesh mesh;
  // Global edge id: vertex index times 3 plus axis.
  std::unordered_map<std::size_t, int> edge_vertex;
  auto vertex_on_edge = [&](int i, int j, int k, int edge) {
    const auto& [ca, cb] = kEdge[edge];
    const auto& a = kCorner[ca];
    const auto& b = kCorner[cb];
    // Orient the edge from its lower corner along the axis it spans.
    const bool forward = a[0] + a[1] + a[2] < b[0] + b[1] + b[2];
    const auto& lo = forward ? a : b;
    const auto& hi = forward ? b : a;
    const int axis = lo[0] != hi[0] ? 0 : (lo[1] != hi[1] ? 1 : 2);
    const std::size_t v0 = grid.index(i + lo[0], j + lo[1], k + lo[2]);
    const std::size_t v1 = grid.index(i + hi[0], j + hi[1], k + hi[2]);
    const std::size_t key = v0 * 3 + axis;
    if (const auto it = edge_vertex.find(key); it != edge_vertex.end()) return it->second;
    const double s0 = grid.values[v0] - iso;
    const double s1 = grid.values[v1] - iso;
    const double t = s0 == s1 ? 0.5 : std::clamp(s0 / (s0 - s1), 0.0, 1.0);
    const Vec3 p0 = grid.position(i + lo[0], j + lo[1], k + lo[2]);
    const Vec3 p1 = grid.position(i + hi[0], j + hi[1], k + hi[2]);
    const int id = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(p0 + t * (p1 - p0));
    edge_vertex.emplace(key, id);
    return id;
  };
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        int config = 0;
        bool skip = false;
        for (int c = 0; c < 8; ++c) {
          const std::size_t v = grid.index(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
          if (!grid.known.empty() && !grid.known[v]) {
            skip = true;
            break;
          }
          if (grid.values[v] < iso) config |= 1 << c;
        }
        if (skip || config == 0 || config == 255) continue;
        for (int t = 0; kTriangles[config][t] >= 0; t += 3) {
          const int a = vertex_on_edge(i, j, k, kTriangles[config][t]);
          const int b = vertex_on_edge(i, j, k, kTriangles[config][t + 1]);
          const int c = vertex_on_edge(i, j, k, kTriangles[config][t + 2]);
          if (a == b || b == c || a == c) continue;
          // The table winds triangles clockwise seen from outside.
          mesh.faces.push_back({a, c, b});
        }
      }
    }
  }
  return mesh;
}

TriangleMesh extract_mesh(const std::function<double(const Vec3&)>& sdf, const ExtractionConfig& config) {
  config.validate();
  ScalarGrid grid{config.resolution, config.bounds, {}, {}};
  const int side = grid.side();
  grid.values.resize(static_cast<std::size_t>(side) * side * side);
  parallel_for(static_cast<std::size_t>(side), [&](std::size_t k) {
    for (int j = 0; j < side; ++j)
      for (int i = 0; i < side; ++i)
        grid.values[grid.index(i, j, static_cast<int>(k))] = sdf(grid.position(i, j, static_cast<int>(k)));
  });
  return filter_components(marching_cubes(grid, config.iso), config.min_component_faces);
}

TriangleMesh extract_mesh(const FieldView& field, const ExtractionConfig& config) {
  config.validate();
  ScalarGrid grid{config.resolution, config.bounds, {}, {}};
  const int side = grid.side();
  const auto total = static_cast<std::size_t>(side) * side * side;
  grid.values.assign(total, field.config.empty_sdf);
  grid.known.assign(total, 0);
  const Vec3 step = config.bounds.extent() / config.resolution;
  const double r = field.config.radius;
  for (const auto& p : field.points.positions) {
    const Vec3 lo = ((p - config.bounds.lo).array() - r) / step.array();
    const Vec3 hi = ((p - config.bounds.lo).array() + r) / step.array();
    for (int k = std::max(0, static_cast<int>(std::ceil(lo.z()))); k <= std::min(side - 1, static_cast<int>(std::floor(hi.z()))); ++k)
      for (int j = std::max(0, static_cast<int>(std::ceil(lo.y()))); j <= std::min(side - 1, static_cast<int>(std::floor(hi.y()))); ++j)
        for (int i = std::max(0, static_cast<int>(std::ceil(lo.x()))); i <= std::min(side - 1, static_cast<int>(std::floor(hi.x()))); ++i)
          if ((grid.position(i, j, k) - p).squaredNorm() <= r * r) grid.known[grid.index(i, j, k)] = 1;
  }
  std::vector<std::size_t> ids;
  std::vector<Vec3> xs;
  for (int k = 0; k < side; ++k)
    for (int j = 0; j < side; ++j)
      for (int i = 0; i < side; ++i) {
        const std::size_t v = grid.index(i, j, k);
        if (!grid.known[v]) continue;
        ids.push_back(v);
        xs.push_back(grid.position(i, j, k));
      }
  const Vector values = eval_sdf(field, xs);
  for (std::size_t n = 0; n < ids.size(); ++n) {
    grid.values[ids[n]] = values[static_cast<Eigen::Index>(n)];
    // The window test above is exact in real arithmetic; the index query decides.
    if (values[static_cast<Eigen::Index>(n)] == field.config.empty_sdf &&
        field.points.grid.query(xs[n], 1, r).empty())
      grid.known[ids[n]] = 0;
  }
  return filter_components(marching_cubes(grid, config.iso), config.min_component_faces);
}

TriangleMesh filter_components(const TriangleMesh& mesh, std::size_t min_faces) {
  if (min_faces <= 1 || mesh.faces.empty()) return mesh;
  std::vector<int> parent(mesh.vertices.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& f : mesh.faces) {
    for (int e = 1; e < 3; ++e) {
      const int a = find(f[0]), b = find(f[e]);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }
  std::vector<std::size_t> count(mesh.vertices.size(), 0);
  for (const auto& f : mesh.faces) ++count[find(f[0])];
  TriangleMesh out;
  std::vector<int> remap(mesh.vertices.size(), -1);
  for (const auto& f : mesh.faces) {
    if (count[find(f[0])] < min_faces) continue;
    std::array<int, 3> g{};
    for (int c = 0; c < 3; ++c) {
      if (remap[f[c]] < 0) {
        remap[f[c]] = static_cast<int>(out.vertices.size());
        out.vertices.push_back(mesh.vertices[f[c]]);
        if (!mesh.colors.empty()) out.colors.push_back(mesh.colors[f[c]]);
      }
      g[c] = remap[f[c]];
    }
    out.faces.push_back(g);
  }
  return out;
}

std::vector<Vec3> sample_mesh_points(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed) {
  if (mesh.faces.empty()) throw std::invalid_argument("sample_mesh_points: mesh has no faces");
  std::vector<double> cdf(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) cdf[f] = total += mesh.face_area(f);
  if (!(total > 0.0)) throw std::invalid_argument("sample_mesh_points: mesh has zero area");
  Rng rng = make_rng(seed, 4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u(rng) * total);
    const auto& face = mesh.faces[std::min<std::size_t>(it - cdf.begin(), cdf.size() - 1)];
    double a = u(rng), b = u(rng);
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    const Vec3& p0 = mesh.vertices[face[0]];
    out.push_back(p0 + a * (mesh.vertices[face[1]] - p0) + b * (mesh.vertices[face[2]] - p0));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> brute_force_nearest(std::span<const Vec3> from, std::span<const Vec3> to) {
  std::vector<double> out(from.size());
  parallel_for(from.size(), [&](std::size_t i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) best = std::min(best, (from[i] - q).squaredNorm());
    out[i] = std::sqrt(best);
  });
  return out;
}

// Uniform hash grid over `to` searched in growing Chebyshev shells; exact.
std::vector<double> grid_nearest(std::span<const Vec3> from, std::span<const Vec3> to) {
  Vec3 lo = to[0], hi = to[0];
  for (const auto& p : to) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double volume_side = std::max((hi - lo).maxCoeff(), 1e-12);
  const double cell = std::max(volume_side / std::cbrt(static_cast<double>(to.size()) / 2.0), 1e-12);
  auto key = [](long x, long y, long z) {
    return (static_cast<std::uint64_t>(x & 0x1FFFFF) << 42) | (static_cast<std::uint64_t>(y & 0x1FFFFF) << 21) |
           static_cast<std::uint64_t>(z & 0x1FFFFF);
  };
  auto coord = [&](const Vec3& p) {
    const Vec3 c = ((p - lo) / cell).array().floor();
    return std::array<long, 3>{static_cast<long>(c.x()), static_cast<long>(c.y()), static_cast<long>(c.z())};
  };
  std::unordered_map<std::uint64_t, std::vector<int>> cells;
  for (std::size_t i = 0; i < to.size(); ++i) {
    const auto c = coord(to[i]);
    cells[key(c[0], c[1], c[2])].push_back(static_cast<int>(i));
  }
  const auto span_cells = coord(hi);
  const long max_shell = std::max({span_cells[0], span_cells[1], span_cells[2]}) + 2;
  std::vector<double> out(from.size());
  parallel_for(from.size(), [&](std::size_t n) {
    const Vec3& x = from[n];
    const auto c = coord(x);
    // Distance from x to the box of `to`: shells closer than this are empty.
    const double outside = (lo - x).cwiseMax(x - hi).cwiseMax(0.0).norm();
    double best = std::numeric_limits<double>::infinity();
    // Shells whose cells all lie closer than `outside` hold no points.
    const long first = std::max(0L, static_cast<long>(outside / (std::sqrt(3.0) * cell)) - 1);
    for (long r = first;; ++r) {
      if (r * cell > outside + 2.0 * cell * max_shell) break;
      for (long dz = -r; dz <= r; ++dz)
        for (long dy = -r; dy <= r; ++dy)
          for (long dx = -r; dx <= r; ++dx) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
            const auto it = cells.find(key(c[0] + dx, c[1] + dy, c[2] + dz));
            if (it == cells.end()) continue;
            for (int i : it->second) best = std::min(best, (x - to[i]).squaredNorm());
          }
      // Unvisited cells are at least r cells away from x's cell.
      if (std::sqrt(best) <= r * cell) break;
    }
    out[n] = std::sqrt(best);
  });
  return out;
}

}  // namespace

std::vector<double> nearest_distances(std::span<const Vec3> from, std::span<const Vec3> to, NearestSearch search) {
  if (to.empty()) throw std::invalid_argument("nearest_distances: empty target set");
  if (search == NearestSearch::automatic)
    search = from.size() <= 5000 && to.size() <= 5000 ? NearestSearch::brute_force : NearestSearch::grid;
  return search == NearestSearch::brute_force ? brute_force_nearest(from, to) : grid_nearest(from, to);
}

double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b, NearestSearch search) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer_distance: empty point set");
  auto mean = [](const std::vector<double>& d) { return std::accumulate(d.begin(), d.end(), 0.0) / d.size(); };
  return 0.5 * (mean(nearest_distances(a, b, search)) + mean(nearest_distances(b, a, search)));
}

double psnr(const Image& image, const Image& reference) {
  if (image.width != reference.width || image.height != reference.height)
    throw std::invalid_argument("psnr: image sizes differ");
  if (image.pixels.empty()) throw std::invalid_argument("psnr: empty image");
  double sum = 0.0;
  for (std::size_t i = 0; i < image.pixels.size(); ++i) sum += (image.pixels[i] - reference.pixels[i]).squaredNorm();
  const double mse = sum / (3.0 * image.pixels.size());
  if (mse == 0.0) return 99.0;
  return std::min(99.0, -10.0 * std::log10(mse));
}

void append_result(const std::filesystem::path& csv, const std::string& scene, const std::string& metric,
                   double value) {
  const bool fresh = !std::filesystem::exists(csv) || std::filesystem::file_size(csv) == 0;
  std::ofstream out(csv, std::ios::app);
  if (!out) throw std::runtime_error("cannot open results file '" + csv.string() + "'");
  out.precision(17);
  if (fresh) out << "scene,metric,value\n";
  out << scene << ',' << metric << ',' << value << '\n';
}

// ---------------------------------------------------------------------------

std::vector<int> kmeans(const Matrix& data, int k, std::uint64_t seed, int max_iterations) {
  const Eigen::Index n = data.cols();
  if (k < 1 || k > n) throw std::invalid_argument("kmeans: cluster count must be in [1, point count]");
  Rng rng = make_rng(seed, 5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix centers(data.rows(), k);
  centers.col(0) = data.col(std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng));
  Vector d2 = (data.colwise() - centers.col(0)).colwise().squaredNorm().transpose();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double target = u(rng) * total;
      for (pick = 0; pick < n - 1; ++pick) {
        target -= d2[pick];
        if (target < 0.0) break;
      }
    }
    centers.col(c) = data.col(pick);
    d2 = d2.cwiseMin((data.colwise() - centers.col(c)).colwise().squaredNorm().transpose());
  }
  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (data.col(i) - centers.col(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (labels[i] != best) {
        labels[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    Matrix sums = Matrix::Zero(data.rows(), k);
    std::vector<int> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.col(labels[i]) += data.col(i);
      ++counts[labels[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) centers.col(c) = sums.col(c) / counts[c];
    }
  }
  return labels;
}

LatentAnalysis latent_analysis(const Matrix& latents, int n_components, int k_clusters, std::uint64_t seed) {
  const Eigen::Index n = latents.cols();
  if (n_components < 1 || n_components > latents.rows())
    throw std::invalid_argument("latent_analysis: component count must be in [1, latent dim]");
  if (n < n_components) throw std::invalid_argument("latent_analysis: fewer points than components");
  if (k_clusters < 1 || k_clusters > n) throw std::invalid_argument("latent_analysis: more clusters than points");
  const Matrix centered = latents.colwise() - latents.rowwise().mean();
  const Matrix covariance = centered * centered.transpose() / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance);
  const Vector values = eig.eigenvalues().reverse();
  Matrix axes = eig.eigenvectors().rowwise().reverse().leftCols(n_components);
  for (int c = 0; c < n_components; ++c) {
    Eigen::Index at;
    axes.col(c).cwiseAbs().maxCoeff(&at);
    if (axes(at, c) < 0.0) axes.col(c) = -axes.col(c);
  }
  LatentAnalysis out;
  out.projection = axes.transpose() * centered;
  const double total = values.cwiseMax(0.0).sum();
  out.explained_variance = Vector::Zero(n_components);
  if (total > 0.0) out.explained_variance = values.head(n_components).cwiseMax(0.0) / total;
  out.labels = kmeans(latents, k_clusters, seed);
  return out;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw std::invalid_argument("adjusted_rand_index: label counts differ");
  const std::size_t n = a.size();
  if (n < 2) return 1.0;
  std::unordered_map<int, std::size_t> ra, rb;
  std::unordered_map<std::uint64_t, std::size_t> joint;
  for (std::size_t i = 0; i < n; ++i) {
    ++ra[a[i]];
    ++rb[b[i]];
    ++joint[(static_cast<std::uint64_t>(static_cast<std::uint32_t>(a[i])) << 32) | static_cast<std::uint32_t>(b[i])];
  }
  auto pairs = [](double m) { return m * (m - 1.0) / 2.0; };
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [k, v] : joint) index += pairs(static_cast<double>(v));
  for (const auto& [k, v] : ra) sum_a += pairs(static_cast<double>(v));
  for (const auto& [k, v] : rb) sum_b += pairs(static_cast<double>(v));
  const double expected = sum_a * sum_b / pairs(static_cast<double>(n));
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

int octant(const Vec3& d) { return (d.x() > 0.0 ? 1 : 0) | (d.y() > 0.0 ? 2 : 0) | (d.z() > 0.0 ? 4 : 0); }

std::vector<Rgb> projection_colors(const Matrix& projection) {
  const Eigen::Index n = projection.cols();
  std::vector<Rgb> colors(static_cast<std::size_t>(n), Rgb::Constant(0.5));
  for (Eigen::Index c = 0; c < std::min<Eigen::Index>(3, projection.rows()); ++c) {
    const double lo = projection.row(c).minCoeff();
    const double hi = projection.row(c).maxCoeff();
    for (Eigen::Index i = 0; i < n; ++i) colors[i][c] = hi > lo ? (projection(c, i) - lo) / (hi - lo) : 0.5;
  }
  return colors;
}

}  // namespace lpsurf
