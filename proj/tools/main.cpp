#include "cli.hpp"

int main(int argc, char** argv) { return graft::cli::dispatch(argc, argv); }
