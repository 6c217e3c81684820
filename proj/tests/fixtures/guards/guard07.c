/* Parsed-integer guard: the decimal value must land in [10, 99]. */
#include <stdio.h>
#include <stdlib.h>

static char buf[4096];
static long len;
static long value;

static void vulnerable_sink(void) {
    printf("GUARD: target reached\n"); /* [bb:target] */
}

int main(int argc, char** argv) {
    if (argc < 2) return 1; /* [bb:entry] */
    FILE* f = fopen(argv[1], "rb");
    if (!f) return 1;
    len = (long)fread(buf, 1, sizeof buf - 1, f);
    fclose(f);
    buf[len] = 0;
    value = atol(buf);
    if (value < 10 || value > 99) { /* [bb:guard] */
        return 1; /* [bb:bail] */
    }
    vulnerable_sink(); /* [bb:call] */
    return 0; /* [bb:exit] */
}
