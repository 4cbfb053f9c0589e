void *fopen_or_warn_stdin(const char *filename)
{
    return (void *)filename;
}
