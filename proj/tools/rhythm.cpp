#include <iostream>
#include <string>
#include <vector>

#include "rhythm/app.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return rhythm::app::run(args, std::cout, std::cerr);
}
