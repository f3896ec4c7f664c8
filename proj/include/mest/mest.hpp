#pragma once

#include "mest/angle.hpp"
#include "mest/axioms.hpp"
#include "mest/compound.hpp"
#include "mest/core.hpp"
#include "mest/csv.hpp"
#include "mest/euclidean.hpp"
#include "mest/ins_gps.hpp"
#include "mest/least_squares.hpp"
#include "mest/pose_graph.hpp"
#include "mest/quaternion.hpp"
#include "mest/random.hpp"
#include "mest/rotation2d.hpp"
#include "mest/so3.hpp"
#include "mest/sphere.hpp"
#include "mest/stats.hpp"
#include "mest/ukf.hpp"
