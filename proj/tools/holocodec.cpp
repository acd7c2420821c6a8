#include <cstdio>

int main() {
    std::puts("holocodec: cli under construction");
    return 2;
}
