#include "multiflex/coord.hpp"

#include <algorithm>

namespace multiflex::coord {

const char* reservation_kind_name(ReservationKind kind) {
  switch (kind) {
    case ReservationKind::GoalPose: return "GoalPose";
    case ReservationKind::SweptPath: return "SweptPath";
    case ReservationKind::CurrentPose: return "CurrentPose";
  }
  return "?";
}

geom::VoxelSet constraints_for(const OccupancyBoard& board, int robot) {
  geom::VoxelSet out(board.grid);
  for (const auto& [other, voxels] : board.live) {
    if (other != robot) {
      out.unite(voxels);
    }
  }
  for (const auto& res : board.reserved) {
    if (res.robot != robot) {
      out.unite(res.voxels);
    }
  }
  return out;
}

bool detect_overlap(const ClaimRequest& request, const OccupancyBoard& board) {
  if (!request.claim.grid().same_as(board.grid)) {
    throw std::invalid_argument("detect_overlap: claim grid does not match board grid");
  }
  if (request.claim.empty()) {
    return false;
  }
  return request.claim.intersects(constraints_for(board, request.robot));
}

namespace {

std::uint64_t reserve(OccupancyBoard& board, const ClaimRequest& request,
                      ReservationKind kind) {
  Reservation res;
  res.id = board.next_id++;
  res.robot = request.robot;
  res.voxels = request.claim;
  res.kind = kind;
  res.task = request.task;
  res.subtask = request.subtask;
  board.reserved.push_back(std::move(res));
  return board.reserved.back().id;
}

}  // namespace

CoordDecision coordinate(OccupancyBoard& board, const ClaimRequest& request,
                         const std::function<bool(const geom::VoxelSet&)>& path_feasible) {
  CoordDecision decision;
  decision.constraints = constraints_for(board, request.robot);

  switch (request.kind) {
    case taskplan::SubTaskKind::Idle:
      decision.verdict = Verdict::Proceed;
      return decision;

    case taskplan::SubTaskKind::RM: {
      if (detect_overlap(request, board)) {
        decision.verdict = Verdict::Wait;
        decision.reason = "goal overlap";
        return decision;
      }
      if (path_feasible && !path_feasible(decision.constraints)) {
        decision.verdict = Verdict::Wait;
        decision.reason = "no feasible path";
        return decision;
      }
      decision.verdict = Verdict::Proceed;
      decision.reservation_id = reserve(board, request, ReservationKind::GoalPose);
      return decision;
    }

    case taskplan::SubTaskKind::NRM: {
      if (detect_overlap(request, board)) {
        decision.verdict = Verdict::Wait;
        decision.reason = "swept path overlap";
        return decision;
      }
      decision.verdict = Verdict::Proceed;
      decision.reservation_id = reserve(board, request, ReservationKind::SweptPath);
      return decision;
    }

    case taskplan::SubTaskKind::NMA: {
      decision.verdict = Verdict::Proceed;
      decision.reservation_id = reserve(board, request, ReservationKind::CurrentPose);
      return decision;
    }
  }
  return decision;
}

void release(OccupancyBoard& board, std::uint64_t reservation_id) {
  auto it = std::find_if(board.reserved.begin(), board.reserved.end(),
                         [&](const Reservation& r) { return r.id == reservation_id; });
  if (it == board.reserved.end()) {
    throw ReleaseError("release: unknown reservation id " + std::to_string(reservation_id));
  }
  board.reserved.erase(it);
}

std::vector<std::uint64_t> reservations_for_task(const OccupancyBoard& board, int robot,
                                                 const std::string& task) {
  std::vector<std::uint64_t> ids;
  for (const auto& res : board.reserved) {
    if (res.robot == robot && res.task == task) {
      ids.push_back(res.id);
    }
  }
  return ids;
}

}  // namespace multiflex::coord
