// representation.hpp -- week-level action representations shared by the
// miner, the representation learner and the dropout predictor.
#pragma once

#include <string>
#include <vector>

namespace bbdrop {

struct WeekRef {
  std::string user_id;
  int week_index = 0;
  bool label = false;
};

// Length-M vector of normalized action scores for one week, index-aligned
// with the mined action list. Entries live in [0,1].
struct ActionRepresentation {
  WeekRef week;
  std::vector<double> scores;
};

// One user's representations in week order.
struct UserHistory {
  std::string user_id;
  std::vector<ActionRepresentation> weeks;
};

// Groups rows by user, sorted by user_id with weeks ascending.
std::vector<UserHistory> group_by_user(std::vector<ActionRepresentation> reps);

}  // namespace bbdrop
