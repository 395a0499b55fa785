#pragma once

#include <stdexcept>
#include <string>

namespace ragforget {

// Base class for every error the toolkit raises. Each condition named in a
// module contract gets its own type so callers (and tests) can catch exactly
// the failure they care about.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define RAGFORGET_DEFINE_ERROR(Name)                 \
    struct Name : Error {                            \
        using Error::Error;                          \
    }

// corpus
RAGFORGET_DEFINE_ERROR(FileNotFound);
RAGFORGET_DEFINE_ERROR(EmptyDataset);
RAGFORGET_DEFINE_ERROR(InvalidRatios);
RAGFORGET_DEFINE_ERROR(MissingGenreHeader);

struct MalformedLine : Error {
    MalformedLine(const std::string& what, long line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_no(line) {}
    long line_no;
};

// backbone
RAGFORGET_DEFINE_ERROR(EmptyTrainingSet);
RAGFORGET_DEFINE_ERROR(UnknownUser);
RAGFORGET_DEFINE_ERROR(UnknownItem);

// retrieval
RAGFORGET_DEFINE_ERROR(EmptyHistory);
RAGFORGET_DEFINE_ERROR(EmptyCandidates);
RAGFORGET_DEFINE_ERROR(GridMismatch);

// generator
RAGFORGET_DEFINE_ERROR(NoJsonFound);
RAGFORGET_DEFINE_ERROR(NotAnObject);
RAGFORGET_DEFINE_ERROR(IncompleteScores);
RAGFORGET_DEFINE_ERROR(BackendUnreachable);
RAGFORGET_DEFINE_ERROR(Timeout);
RAGFORGET_DEFINE_ERROR(RepairExhausted);

// eval
RAGFORGET_DEFINE_ERROR(EmptyTargets);
RAGFORGET_DEFINE_ERROR(NoEvaluableUsers);
RAGFORGET_DEFINE_ERROR(KGridMismatch);
RAGFORGET_DEFINE_ERROR(MissingCheckpoint);

#undef RAGFORGET_DEFINE_ERROR

}  // namespace ragforget
