# Panoptic perception toolkit for assistive navigation
