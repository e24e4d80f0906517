# Core plumbing for the spiking-network toolkit
