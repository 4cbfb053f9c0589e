struct module {
    int state;
};

struct module __this_module;

void __module_get(struct module *module);
void module_put(struct module *module);

static int toy_users;

int toy_open(void)
{
    toy_users++;
    return 0;
}

int toy_release(void)
{
    toy_users--;
    module_put(&__this_module);
    return 0;
}
