#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "multiflex/geom.hpp"
#include "multiflex/taskplan.hpp"

namespace multiflex::coord {

enum class ReservationKind { GoalPose, SweptPath, CurrentPose };

const char* reservation_kind_name(ReservationKind kind);

struct Reservation {
  std::uint64_t id{0};
  int robot{0};
  geom::VoxelSet voxels;
  ReservationKind kind{ReservationKind::GoalPose};
  std::string task;
  int subtask{0};
};

// Single serialized authority over live occupancy and reservations.
// live is refreshed every planning cycle; reservations are released only by
// their owner.
struct OccupancyBoard {
  geom::VoxelGridSpec grid;
  std::map<int, geom::VoxelSet> live;
  std::vector<Reservation> reserved;
  std::uint64_t next_id{1};
};

enum class Verdict { Proceed, Wait };

struct CoordDecision {
  Verdict verdict{Verdict::Wait};
  // Voxels the requesting robot's planner must treat as occupied; excludes
  // the robot's own live occupancy and own reservations.
  geom::VoxelSet constraints;
  std::uint64_t reservation_id{0};
  std::string reason;
};

// What one robot wants to claim this cycle.
struct ClaimRequest {
  int robot{0};
  taskplan::SubTaskKind kind{taskplan::SubTaskKind::Idle};
  std::string task;
  int subtask{0};
  // Voxelized claim for the sub-task type: RM goal pose, NRM swept path,
  // NMA current pose; empty for Idle. Bundles claim the whole range upfront.
  geom::VoxelSet claim;
};

// Everything on the board owned by robots other than `robot`.
geom::VoxelSet constraints_for(const OccupancyBoard& board, int robot);

// True iff the claim voxels intersect any other robot's live occupancy or
// reservation.
bool detect_overlap(const ClaimRequest& request, const OccupancyBoard& board);

// Flowchart per sub-task type. `path_feasible` is consulted only for RM
// (goal overlap check first, then path search, then reservation).
CoordDecision coordinate(OccupancyBoard& board, const ClaimRequest& request,
                         const std::function<bool(const geom::VoxelSet&)>& path_feasible);

struct ReleaseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void release(OccupancyBoard& board, std::uint64_t reservation_id);

// All reservations one robot holds for one task (bundle abort support).
std::vector<std::uint64_t> reservations_for_task(const OccupancyBoard& board, int robot,
                                                 const std::string& task);

}  // namespace multiflex::coord
