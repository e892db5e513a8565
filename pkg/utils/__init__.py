# Computational modules of the switching-diffusion toolkit
