#include "sten/cli.hpp"

int main(int argc, char** argv) { return sten::cli::dispatch(argc, argv); }
