#include "pintent/cli.hpp"

int main(int argc, char** argv) { return pintent::cli::run(argc, argv); }
